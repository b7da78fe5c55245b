#include <stdio.h>
#include "fchmrf.h"

int main(void) {
    double positions[6] = {0.0, 0.0, 0.0, 0.5, 0.0, 0.0};
    double values[2] = {1.0, 1.0};
    double out[2];
    FchmrfLattice *lat = NULL;
    if (fchmrf_lattice_build(positions, 2, 3, &lat) != FCHMRF_STATUS_OK) return 1;
    if (fchmrf_lattice_filter(lat, values, out, 2) != FCHMRF_STATUS_OK) return 2;
    fchmrf_lattice_free(lat);
    if (fchmrf_lattice_build(NULL, 2, 3, &lat) != FCHMRF_STATUS_NULL_POINTER) return 3;
    if (fchmrf_last_error() == NULL) return 4;
    FchmrfFitConfig config = fchmrf_fit_config_default();
    printf("%s %.6f %.6f %zu\n", fchmrf_version(), out[0], out[1], config.r);
    return out[0] > 1.0 ? 0 : 5;
}
