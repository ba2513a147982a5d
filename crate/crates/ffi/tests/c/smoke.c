#include <stdio.h>
#include <string.h>
#include "favar.h"

int main(void) {
    FavarSimHandle *sim = NULL;
    if (favar_simulate("A1", 3, 0, &sim) != FAVAR_STATUS_OK) return 1;
    size_t n, p2, q;
    if (favar_sim_dims(sim, &n, &p2, &q) != FAVAR_STATUS_OK) return 2;
    favar_sim_free(sim);

    FavarSimHandle *bad = NULL;
    if (favar_simulate("nope", 0, 0, &bad) != FAVAR_STATUS_INVALID_ARGUMENT) return 3;
    const char *msg = favar_last_error();
    if (msg == NULL || strstr(msg, "nope") == NULL) return 4;

    FavarFitOptions opts = favar_fit_options_default();
    if (opts.lags != 1) return 5;
    printf("%s %zu %zu %zu\n", favar_version(), n, p2, q);
    return 0;
}
