#pragma once

// Meaning-diversity estimators over K sampled responses: semantic entropy,
// number of semantic sets, and the graph-Laplacian family (EigV, degree,
// eccentricity), plus lexical similarity.

#include <vector>

#include <Eigen/Dense>

#include "lmue/records.hpp"
#include "lmue/textmetrics.hpp"

namespace lmue {

// entail(i, j) = p_entail(premise = y_i, hypothesis = y_j); contra likewise.
struct PairwiseScores {
  Eigen::MatrixXd entail;
  Eigen::MatrixXd contra;

  Eigen::Index size() const { return entail.rows(); }
};

enum class SimilarityKernel { Jaccard, NliEntail, NliContra, Rouge1, RougeL, Bleu };

const char* to_string(SimilarityKernel kernel);
SimilarityKernel similarity_kernel_from_string(std::string_view name);
bool is_nli(SimilarityKernel kernel);

struct SimilarityMatrix {
  Eigen::MatrixXd s;
  SimilarityKernel kernel = SimilarityKernel::Jaccard;

  Eigen::Index size() const { return s.rows(); }
};

struct ClusterAssignment {
  std::vector<int> labels;
  int cluster_count = 0;
};

struct Eccentricity {
  double total = 0.0;
  std::vector<double> per_response;
};

/// S_ij = (s(y_i, y_j) + s(y_j, y_i)) / 2. Text kernels put 1 on the
/// diagonal; NLI kernels use the scores as given (nli_contra is 1 - p_contra).
SimilarityMatrix build_similarity_matrix(const std::vector<SampledOutput>& samples,
                                         SimilarityKernel kernel,
                                         const PairwiseScores* pairwise = nullptr);

/// Greedy left-to-right pass: a response joins the first cluster whose
/// earliest member it entails and is entailed by (entail > contra both ways),
/// otherwise it opens a new cluster.
ClusterAssignment cluster_bidirectional_entailment(const PairwiseScores& pairwise);

int num_semantic_sets(const PairwiseScores& pairwise);

/// -sum_m P_m log P_m with P_m the mean (not the sum) of the sample
/// probabilities inside cluster m.
double semantic_entropy(const GenerationRecord& record, const ClusterAssignment& assignment);

/// Normalized Laplacian I - D^{-1/2} S D^{-1/2}. Throws DegenerateSimilarity on
/// a non-positive row sum.
Eigen::MatrixXd normalized_laplacian(const SimilarityMatrix& sim);

/// Eigenvalues of the normalized Laplacian, ascending, clamped to [0, 2].
Eigen::VectorXd laplacian_eigenvalues(const SimilarityMatrix& sim);

/// sum_k max(0, 1 - lambda_k).
double eigv_laplacian(const SimilarityMatrix& sim);

/// 1 - trace(D) / K^2.
double degmat_uncertainty(const SimilarityMatrix& sim);

/// Spectral embedding from the eigenvectors whose eigenvalue is below
/// `eig_threshold` (at least one). Total is the Frobenius norm of the centered
/// embeddings, per_response the norm of each centered row.
Eccentricity eccentricity(const SimilarityMatrix& sim, double eig_threshold = 0.9);

/// Negative mean pairwise kernel similarity over unordered pairs.
double lexical_similarity(const std::vector<SampledOutput>& samples, TextMetric kernel);

}  // namespace lmue
