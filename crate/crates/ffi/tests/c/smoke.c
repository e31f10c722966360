#include <stdio.h>
#include <string.h>
#include "grouptest.h"

int main(void) {
    const double probs[6] = {0.3, 0.2, 0.2, 0.1, 0.05, 0.0001};
    const uint8_t truth[6] = {1, 0, 1, 0, 0, 0};
    GtPopulation *pop = NULL;
    GtPlan *plan = NULL;
    GtRun *run = NULL;

    if (gt_population_new(probs, 6, &pop) != GT_STATUS_OK) return 1;
    GtPlanConfig cfg = gt_plan_config_default();
    cfg.theta = 0.01;
    if (gt_plan_new(pop, &cfg, &plan) != GT_STATUS_OK) return 2;
    if (gt_plan_run(plan, truth, 6, GT_STRATEGY_MERGED_PRUNING, -1, &run) != GT_STATUS_OK) return 3;

    size_t found[6];
    size_t n = gt_run_found_copy(run, found, 6);
    printf("tests=%llu found=%zu success=%d\n", (unsigned long long)gt_run_total_tests(run), n, gt_run_success(run));
    if (n != 2 || found[0] != 0 || found[1] != 2 || !gt_run_success(run)) return 4;

    const double bad[1] = {1.5};
    GtPopulation *none = NULL;
    if (gt_population_new(bad, 1, &none) != GT_STATUS_INVALID_PROBABILITY) return 5;
    if (gt_last_error_message() == NULL || strlen(gt_last_error_message()) == 0) return 6;

    gt_run_free(run);
    gt_plan_free(plan);
    gt_population_free(pop);
    return 0;
}
