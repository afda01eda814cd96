#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "conclad.h"

#define D 6
#define N_PRE 300
#define N_OLD 60
#define N_NEW 30
#define N_POOL (N_OLD + N_NEW)

static unsigned long long state = 88172645463325252ULL;

static double uniform(void) {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return ((state >> 11) + 0.5) / 9007199254740992.0;
}

static double gauss(void) {
    return sqrt(-2.0 * log(uniform())) * cos(6.283185307179586 * uniform());
}

/* class c lives on axes 2c and 2c+1 around a mean of 8 on axis 2c */
static void sample(int c, float *row) {
    for (int j = 0; j < D; j++) row[j] = (float)(0.05 * gauss());
    row[2 * c] += (float)(8.0 + gauss());
    row[2 * c + 1] += (float)gauss();
}

struct oracle {
    const uint64_t *ids;
    const int32_t *labels;
    size_t n;
    int calls;
};

static int ask(void *user, uint64_t id, int32_t *label) {
    struct oracle *o = user;
    o->calls++;
    for (size_t i = 0; i < o->n; i++) {
        if (o->ids[i] == id) {
            *label = o->labels[i];
            return 0;
        }
    }
    return 1;
}

#define CHECK(call)                                                              \
    do {                                                                         \
        int rc_ = (call);                                                        \
        if (rc_ != CONCLAD_OK) {                                                 \
            fprintf(stderr, "%s failed (%d): %s\n", #call, rc_,                  \
                    conclad_last_error_message());                               \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    static float pre[N_PRE * D], pool[N_POOL * D], test[N_POOL * D];
    static int32_t pre_labels[N_PRE], pool_labels[N_POOL], test_labels[N_POOL];
    static uint64_t pre_ids[N_PRE], pool_ids[N_POOL], test_ids[N_POOL];

    for (int i = 0; i < N_PRE; i++) {
        pre_labels[i] = i % 2;
        pre_ids[i] = (uint64_t)i;
        sample(pre_labels[i], pre + i * D);
    }
    for (int i = 0; i < N_POOL; i++) {
        int c = i < N_OLD ? i % 2 : 2;
        pool_labels[i] = test_labels[i] = c;
        pool_ids[i] = 1000 + (uint64_t)i;
        test_ids[i] = 5000 + (uint64_t)i;
        sample(c, pool + i * D);
        sample(c, test + i * D);
    }

    ConcladEmbeddings *pre_set = NULL, *pool_set = NULL, *test_set = NULL;
    CHECK(conclad_embeddings_new(pre, N_PRE, D, pre_ids, pre_labels, &pre_set));
    CHECK(conclad_embeddings_new(pool, N_POOL, D, pool_ids, NULL, &pool_set));
    CHECK(conclad_embeddings_new(test, N_POOL, D, test_ids, NULL, &test_set));

    ConcladDetectorOptions options = conclad_detector_options_default();
    ConcladDetector *det = NULL;
    CHECK(conclad_detector_pretrain(pre_set, &options, 3, &det));

    struct oracle o = {pool_ids, pool_labels, N_POOL, 0};
    ConcladTaskResult *result = NULL;
    CHECK(conclad_detector_run_task_with_callback(det, pool_set, ask, &o, 3,
                                                  CONCLAD_MODE_DEFAULT, 7, &result));

    size_t queries = 0, n_disc = 0;
    double threshold = 0.0;
    int32_t disc[8];
    CHECK(conclad_task_result_summary(result, &queries, &threshold));
    CHECK(conclad_task_result_discovered(result, disc, 8, &n_disc));
    if (queries > 3 || (size_t)o.calls != queries || n_disc != 1 || disc[0] != 2) {
        fprintf(stderr, "unexpected task: queries %zu calls %d discovered %zu\n", queries,
                o.calls, n_disc);
        return 1;
    }

    double scores[N_POOL];
    uint8_t novel[N_POOL];
    CHECK(conclad_task_result_score_test(result, test_set, scores, N_POOL));
    for (int i = 0; i < N_POOL; i++) novel[i] = test_labels[i] == 2;
    double auroc = 0.0;
    CHECK(conclad_auroc(scores, novel, N_POOL, &auroc));
    if (auroc < 0.99) {
        fprintf(stderr, "test auroc %f\n", auroc);
        return 1;
    }

    if (conclad_detector_run_task(det, pool_set, NULL, NULL, 0, N_POOL + 1, 0, 1, &result) !=
            CONCLAD_ERR_BUDGET_EXCEEDS_POOL ||
        strlen(conclad_last_error_message()) == 0) {
        fprintf(stderr, "budget error not reported\n");
        return 1;
    }

    conclad_task_result_free(result);
    conclad_detector_free(det);
    conclad_embeddings_free(test_set);
    conclad_embeddings_free(pool_set);
    conclad_embeddings_free(pre_set);
    printf("ok %s queries=%zu auroc=%.3f\n", conclad_version(), queries, auroc);
    return 0;
}
