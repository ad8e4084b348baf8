/* cc demo.c -I../include -L../../../target/release -l:libcosify_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "cosify.h"

int main(void) {
    uint32_t factors[] = {2};
    CosifyModel *model = NULL;
    if (cosify_model_new(factors, 1, 0.3, &model) != COSIFY_STATUS_OK) {
        char msg[256];
        cosify_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 1;
    }
    double bound = 0.0;
    cosify_meeting_lower_bound(model, 1, -10, &bound);
    CosifySample s;
    CosifyStatus st = cosify_cftp_sample(model, 0, 0, 7, 500, &s);
    printf("cosify %s: bound %.6f, X_0(0) = %u (horizon %lld, status %d)\n",
           cosify_version(), bound, s.value, (long long)s.horizon, (int)st);
    cosify_model_free(model);
    return 0;
}
