#include <math.h>
#include <stdio.h>
#include "avfric.h"

int main(int argc, char **argv) {
    if (argc < 2) return 10;
    avf_scenario_t *s = NULL;
    if (avf_scenario_load(argv[1], &s) != AVF_STATUS_OK) {
        fprintf(stderr, "%s\n", avf_last_error_message());
        return 11;
    }
    double x0[1] = {0.0}, t0[1] = {0.0}, u[1] = {1.0};
    avf_trajectory_t *tr = NULL;
    if (avf_simulate(s, 0.0, x0, 1, t0, u, 1, 0.5, 0.01, &tr) != AVF_STATUS_OK) return 12;
    size_t n = avf_trajectory_len(tr);
    double t, x[1];
    if (avf_trajectory_node(tr, n - 1, &t, x, 1) != AVF_STATUS_OK) return 13;
    if (fabs(t - 0.5) > 1e-12) return 14;
    avf_scenario_t *bad = NULL;
    if (avf_scenario_load("/nonexistent.scn", &bad) != AVF_STATUS_IO) return 15;
    if (avf_last_error_message() == NULL) return 16;
    printf("%zu %.6f\n", n, x[0]);
    avf_trajectory_free(tr);
    avf_scenario_free(s);
    return 0;
}
