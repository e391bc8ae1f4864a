#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "orthokit.h"

int main(void) {
    OkLayerConfig cfg = {4, 4, 3, 1, 1, 1, OK_PADDING_CIRCULAR, false};
    OkKernel *k = NULL;
    if (ok_aoc_new(&cfg, 7, &k) != OK_STATUS_OK) {
        fprintf(stderr, "construct failed\n");
        return 1;
    }
    double hi = 0.0, lo = 0.0;
    if (ok_kernel_spectrum(k, 8, 8, OK_SPECTRUM_METHOD_FFT_CIRCULAR, 0, &hi, &lo) != OK_STATUS_OK) {
        return 2;
    }
    ok_kernel_free(k);
    if (fabs(hi - 1.0) > 1e-4 || fabs(lo - 1.0) > 1e-4) {
        fprintf(stderr, "spectrum [%g, %g]\n", lo, hi);
        return 3;
    }
    OkLayerConfig bad = {4, 4, 1, 2, 1, 1, OK_PADDING_ZERO, false};
    if (ok_check_config(&bad) != OK_STATUS_REJECTED) {
        return 4;
    }
    char msg[256];
    ok_last_error_message(msg, sizeof msg);
    printf("%s\n", msg);
    return 0;
}
