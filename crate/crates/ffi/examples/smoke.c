/* Minimal C client: quantize a block, multiply it, query the schedule. */
#include <stdio.h>

#include "mxsim.h"

int main(void) {
    double values[32];
    int8_t elems[32];
    uint8_t exp;
    for (int i = 0; i < 32; i++) {
        values[i] = (i - 16) / 8.0;
    }
    if (mxsim_quantize_block(values, 4, elems, &exp) != MXSIM_STATUS_OK) {
        fprintf(stderr, "quantize: %s\n", mxsim_last_error());
        return 1;
    }

    float dot;
    uint32_t cycles;
    if (mxsim_block_dot(elems, exp, 4, elems, exp, &dot, &cycles) != MXSIM_STATUS_OK) {
        fprintf(stderr, "dot: %s\n", mxsim_last_error());
        return 1;
    }

    MxsimSchedule *schedule = NULL;
    uint8_t bits = 0;
    mxsim_schedule_default(&schedule);
    mxsim_schedule_precision_at(schedule, 20, 1, &bits);
    mxsim_schedule_free(schedule);

    printf("dot %g in %u cycles; stage 1 at t=20 uses MXINT%u\n", dot, cycles, bits);
    return 0;
}
