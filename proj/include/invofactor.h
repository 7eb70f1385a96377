#ifndef INVOFACTOR_H
#define INVOFACTOR_H
/*
 * invofactor — C interface to the exact factorization library.
 *
 * Every call takes and returns JSON text; the schemas are the ones the
 * command-line tool reads and writes (operators, certificates, reports,
 * stratifications, matrices).  Returned strings are heap-allocated and
 * must be released with ivf_string_free.
 *
 * Status codes mirror the command-line exit contract:
 *   0 success, 1 malformed input, 2 refusal (with a machine-readable
 *   reason), 3 verification failure, 4 enumeration budget exceeded.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ivf_status {
  IVF_OK = 0,
  IVF_E_BAD_INPUT = 1,
  IVF_E_REFUSED = 2,
  IVF_E_VERIFY_FAILED = 3,
  IVF_E_BUDGET = 4,
  IVF_E_INTERNAL = 5
} ivf_status;

/* Per-call error context: holds the code and message of the last failing
 * call made through it.  Not thread-safe; use one context per thread. */
typedef struct ivf_ctx ivf_ctx;

ivf_ctx* ivf_ctx_new(void);
void ivf_ctx_free(ivf_ctx* ctx);

/* Stable error code of the last failure on ctx ("BadInput", "NotSplit",
 * "BuilderStuck", ...), or "" when the last call succeeded. */
const char* ivf_last_error_code(const ivf_ctx* ctx);
/* Human-readable message of the last failure, or "". */
const char* ivf_last_error(const ivf_ctx* ctx);

void ivf_string_free(char* s);
const char* ivf_version(void);

/*
 * Factors the operator described by op_json into a product of quadratic
 * automorphisms with the prescribed annihilators.  polys is a
 * semicolon-separated list of three or four monic degree-2 polynomials
 * over the operator's field, e.g. "t^2-1;t^2-1;t^2-1".  seed picks the
 * basis pairings used by the dominant-eigenvalue constructions (default
 * 0 gives reproducible runs).  budget_json may be NULL for defaults; the
 * INVOFACTOR_BUDGET environment variable, when set, overrides the
 * enumeration operation cap.
 *
 * IVF_OK: *cert_json_out receives the certificate.
 * IVF_E_REFUSED: *refusal_json_out receives {"code","detail"} naming the
 * necessary condition that failed (NotAcceptable, DeterminantObstruction,
 * SearchExhausted, BuilderStuck).
 */
ivf_status ivf_factor(ivf_ctx* ctx, const char* op_json, const char* polys,
                      uint64_t seed, const char* budget_json,
                      char** cert_json_out, char** refusal_json_out);

/*
 * Re-verifies a certificate: each factor's annihilation and the product
 * identity, exactly, on the certificate's stored window united with a
 * fresh default window of the given half-width (shift slots -window ..
 * window; the periodic margin scales as window/4, at least 8).  op_json
 * may be NULL, in which case the certificate's embedded target is the
 * operator checked against.  IVF_E_VERIFY_FAILED still writes the report.
 */
ivf_status ivf_verify(ivf_ctx* ctx, const char* op_json,
                      const char* cert_json, int64_t window,
                      char** report_json_out);

/*
 * Exhaustive product-membership search: is the target matrix a product
 * of k matrices annihilated by the k given polynomials?  Writes
 * {"member":bool, "witness":[matrices…]}; non-membership is a successful
 * answer (IVF_OK).
 */
ivf_status ivf_search(ivf_ctx* ctx, const char* target_matrix_json,
                      const char* polys, const char* budget_json,
                      char** result_json_out);

/* Census of products of at most k annihilated factors in GL_n(F_q),
 * stratified by determinant residue. */
ivf_status ivf_census(ivf_ctx* ctx, size_t n, uint32_t q, size_t k,
                      const char* poly, const char* budget_json,
                      char** census_json_out);

/* Acceptability of a scalar for a polynomial triple: writes
 * {"acceptable":bool, "kind":"ProductOfRoots"|"NormSquare"|"No",
 *  "witness":…}.  A "No" verdict is still IVF_OK. */
ivf_status ivf_acceptable(ivf_ctx* ctx, const char* lambda, const char* field,
                          const char* polys, char** result_json_out);

/* Classification of an operator against a factor flavor ("involutions",
 * "unipotents", or "mixed"): writes {"product":bool, "reasons":[…]}. */
ivf_status ivf_classify(ivf_ctx* ctx, const char* op_json, const char* flavor,
                        char** decision_json_out);

/* Dumps a stratification of the operator: the torsion builder's output
 * for periodic universes ("kind":"periodic"), or the quotient-module
 * strata when shift blocks are present ("kind":"quotient").  A stuck
 * builder is reported as IVF_E_REFUSED with the refusal in the out
 * parameter. */
ivf_status ivf_strata(ivf_ctx* ctx, const char* op_json,
                      char** strat_json_out);

#ifdef __cplusplus
}
#endif

#endif /* INVOFACTOR_H */
