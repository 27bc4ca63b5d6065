#include <stdio.h>
#include <stdlib.h>
#include "vbdc.h"

int main(void) {
    VbdcRun *run = NULL;
    if (vbdc_run_preset("iris", 3, &run) != VBDC_STATUS_OK) {
        fprintf(stderr, "run failed: %s\n", vbdc_last_error());
        return 1;
    }
    size_t n = vbdc_run_point_count(run);
    size_t *labels = malloc(n * sizeof *labels);
    if (vbdc_run_copy_labels(run, labels, n) != VBDC_STATUS_OK) {
        return 1;
    }
    VbdcLedger ledger;
    vbdc_run_ledger(run, &ledger);
    printf("%zu %zu %llu %llu\n", n, vbdc_run_k_global(run),
           (unsigned long long)ledger.total_numbers_sent,
           (unsigned long long)ledger.paper_model_elements);

    if (vbdc_run_preset("nope", 0, &run) != VBDC_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    free(labels);
    vbdc_run_free(run);
    return 0;
}
