/* Generates a small noisy dataset, trains a baseline and checks a
 * checkpoint round trip through the C API. Exits non-zero on failure. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "colearn.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    ColearnStatus s_ = (call);                                                 \
    if (s_ != COLEARN_STATUS_OK) {                                             \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,                  \
              colearn_last_error_message());                                   \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(int argc, char **argv) {
  const char *ckpt = argc > 1 ? argv[1] : "roundtrip.clmp";
  ColearnDataset *clean = NULL, *test = NULL, *train = NULL;
  ColearnModel *model = NULL, *loaded = NULL;

  printf("colearn %s\n", colearn_version());
  CHECK(colearn_dataset_synthetic(4, 200, 80, 8, 7, &clean, &test));
  CHECK(colearn_dataset_corrupt_symmetric(clean, 0.3, false, 11, &train));

  double noise = 0.0;
  CHECK(colearn_dataset_noise_fraction(train, &noise));
  printf("noise fraction %.3f\n", noise);

  CHECK(colearn_model_train(train, test, "standard_ce", 2, 0, &model));
  CHECK(colearn_model_save(model, ckpt));
  CHECK(colearn_model_load(ckpt, train, &loaded));

  size_t n = colearn_dataset_len(test);
  uint32_t *a = malloc(n * sizeof *a), *b = malloc(n * sizeof *b);
  CHECK(colearn_model_predict(model, test, a, n));
  CHECK(colearn_model_predict(loaded, test, b, n));
  int same = memcmp(a, b, n * sizeof *a) == 0;
  double acc = 0.0;
  CHECK(colearn_model_accuracy(loaded, test, &acc));
  printf("test accuracy %.3f, predictions identical: %s\n", acc, same ? "yes" : "no");

  if (colearn_model_train(train, test, "no_such_method", 1, 0, &model) !=
          COLEARN_STATUS_INVALID_ARGUMENT ||
      colearn_last_error_message() == NULL) {
    fprintf(stderr, "unknown method was not rejected\n");
    return 1;
  }

  free(a);
  free(b);
  colearn_model_free(loaded);
  colearn_model_free(model);
  colearn_dataset_free(train);
  colearn_dataset_free(test);
  colearn_dataset_free(clean);
  return same ? 0 : 1;
}
