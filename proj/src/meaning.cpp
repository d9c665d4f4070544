#include "lmue/meaning.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "lmue/errors.hpp"

namespace lmue {

const char* to_string(SimilarityKernel kernel) {
  switch (kernel) {
    case SimilarityKernel::Jaccard: return "jaccard";
    case SimilarityKernel::NliEntail: return "nli_entail";
    case SimilarityKernel::NliContra: return "nli_contra";
    case SimilarityKernel::Rouge1: return "rouge1";
    case SimilarityKernel::RougeL: return "rougeL";
    case SimilarityKernel::Bleu: return "bleu";
  }
  return "?";
}

SimilarityKernel similarity_kernel_from_string(std::string_view name) {
  for (auto k : {SimilarityKernel::Jaccard, SimilarityKernel::NliEntail, SimilarityKernel::NliContra,
                 SimilarityKernel::Rouge1, SimilarityKernel::RougeL, SimilarityKernel::Bleu}) {
    if (name == to_string(k)) return k;
  }
  raise(ErrorKind::Input, "unknown similarity kernel '" + std::string(name) + "'");
}

bool is_nli(SimilarityKernel kernel) {
  return kernel == SimilarityKernel::NliEntail || kernel == SimilarityKernel::NliContra;
}

namespace {

TextMetric text_metric_for(SimilarityKernel kernel) {
  switch (kernel) {
    case SimilarityKernel::Rouge1: return TextMetric::Rouge1;
    case SimilarityKernel::RougeL: return TextMetric::RougeL;
    case SimilarityKernel::Bleu: return TextMetric::Bleu;
    default: return TextMetric::Jaccard;
  }
}

void check_pairwise(const PairwiseScores& p, Eigen::Index k) {
  if (p.entail.rows() != k || p.entail.cols() != k || p.contra.rows() != k ||
      p.contra.cols() != k) {
    raise(ErrorKind::Shape, "pairwise NLI scores do not match the number of samples");
  }
}

constexpr double kZeroEigen = 1e-10;

}  // namespace

SimilarityMatrix build_similarity_matrix(const std::vector<SampledOutput>& samples,
                                         SimilarityKernel kernel, const PairwiseScores* pairwise) {
  const auto k = static_cast<Eigen::Index>(samples.size());
  if (k < 2) {
    raise(ErrorKind::InsufficientData, "similarity matrix needs at least 2 samples");
  }
  SimilarityMatrix out{Eigen::MatrixXd::Identity(k, k), kernel};

  if (is_nli(kernel)) {
    if (pairwise == nullptr) {
      raise(ErrorKind::UnavailableInput, std::string(to_string(kernel)) +
                                             " kernel needs pairwise NLI scores");
    }
    check_pairwise(*pairwise, k);
    const Eigen::MatrixXd raw = kernel == SimilarityKernel::NliEntail
                                    ? pairwise->entail
                                    : Eigen::MatrixXd(1.0 - pairwise->contra.array());
    for (Eigen::Index i = 0; i < k; ++i) {
      out.s(i, i) = raw(i, i);
      for (Eigen::Index j = i + 1; j < k; ++j) {
        const double v = (raw(i, j) + raw(j, i)) / 2.0;
        out.s(i, j) = v;
        out.s(j, i) = v;
      }
    }
    return out;
  }

  const TextMetric metric = text_metric_for(kernel);
  std::vector<TokenizedText> tokens;
  tokens.reserve(samples.size());
  for (const auto& s : samples) tokens.push_back(tokenize(s.text));
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const auto& a = tokens[static_cast<std::size_t>(i)];
      const auto& b = tokens[static_cast<std::size_t>(j)];
      const double v = (score_text(metric, a, b) + score_text(metric, b, a)) / 2.0;
      out.s(i, j) = v;
      out.s(j, i) = v;
    }
  }
  return out;
}

ClusterAssignment cluster_bidirectional_entailment(const PairwiseScores& p) {
  const Eigen::Index k = p.size();
  check_pairwise(p, k);
  ClusterAssignment out;
  std::vector<Eigen::Index> representatives;
  for (Eigen::Index j = 0; j < k; ++j) {
    int label = -1;
    for (std::size_t c = 0; c < representatives.size(); ++c) {
      const Eigen::Index r = representatives[c];
      if (p.entail(r, j) > p.contra(r, j) && p.entail(j, r) > p.contra(j, r)) {
        label = static_cast<int>(c);
        break;
      }
    }
    if (label < 0) {
      label = static_cast<int>(representatives.size());
      representatives.push_back(j);
    }
    out.labels.push_back(label);
  }
  out.cluster_count = static_cast<int>(representatives.size());
  return out;
}

int num_semantic_sets(const PairwiseScores& pairwise) {
  return cluster_bidirectional_entailment(pairwise).cluster_count;
}

double semantic_entropy(const GenerationRecord& record, const ClusterAssignment& assignment) {
  if (record.samples.empty()) {
    raise(ErrorKind::UnavailableInput, "semantic_entropy: record '" + record.id + "' has no samples");
  }
  if (assignment.labels.size() != record.samples.size()) {
    raise(ErrorKind::Shape, "semantic_entropy: cluster labels do not cover every sample");
  }
  std::vector<double> mass(static_cast<std::size_t>(assignment.cluster_count), 0.0);
  std::vector<int> count(mass.size(), 0);
  for (std::size_t i = 0; i < record.samples.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment.labels[i]);
    if (c >= mass.size()) raise(ErrorKind::Shape, "semantic_entropy: label out of range");
    mass[c] += std::exp(record.samples[i].total_logprob);
    ++count[c];
  }
  double h = 0.0;
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (count[c] == 0) continue;
    const double pm = mass[c] / count[c];
    if (pm > 0.0) h -= pm * std::log(pm);
  }
  return h;
}

Eigen::MatrixXd normalized_laplacian(const SimilarityMatrix& sim) {
  const Eigen::Index k = sim.size();
  const Eigen::VectorXd degree = sim.s.rowwise().sum();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(degree(i) > 0.0)) {
      raise(ErrorKind::DegenerateSimilarity,
            "similarity row " + std::to_string(i) + " sums to zero");
    }
  }
  const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * sim.s * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  // Exact symmetry for the self-adjoint solver.
  return (lap + lap.transpose()) / 2.0;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solve_laplacian(const SimilarityMatrix& sim,
                                                               bool vectors) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
      normalized_laplacian(sim), vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
}

Eigen::VectorXd clamp_eigenvalues(Eigen::VectorXd ev) {
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double v = std::clamp(ev(i), 0.0, 2.0);
    if (v < kZeroEigen) v = 0.0;
    ev(i) = v;
  }
  return ev;
}

}  // namespace

Eigen::VectorXd laplacian_eigenvalues(const SimilarityMatrix& sim) {
  return clamp_eigenvalues(solve_laplacian(sim, false).eigenvalues());
}

double eigv_laplacian(const SimilarityMatrix& sim) {
  const Eigen::VectorXd ev = laplacian_eigenvalues(sim);
  double u = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) u += std::max(0.0, 1.0 - ev(i));
  return u;
}

double degmat_uncertainty(const SimilarityMatrix& sim) {
  const double k = static_cast<double>(sim.size());
  return 1.0 - sim.s.sum() / (k * k);
}

Eccentricity eccentricity(const SimilarityMatrix& sim, double eig_threshold) {
  const auto solver = solve_laplacian(sim, true);
  const Eigen::VectorXd ev = clamp_eigenvalues(solver.eigenvalues());
  Eigen::Index keep = 0;
  while (keep < ev.size() && ev(keep) < eig_threshold) ++keep;
  keep = std::max<Eigen::Index>(keep, 1);

  // Row j is the embedding of response j.
  Eigen::MatrixXd v = solver.eigenvectors().leftCols(keep);
  const Eigen::RowVectorXd center = v.colwise().mean();
  v.rowwise() -= center;

  Eccentricity out;
  out.total = v.norm();
  out.per_response.reserve(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index j = 0; j < v.rows(); ++j) out.per_response.push_back(v.row(j).norm());
  return out;
}

double lexical_similarity(const std::vector<SampledOutput>& samples, TextMetric kernel) {
  if (samples.size() < 2) {
    raise(ErrorKind::InsufficientData, "lexical similarity needs at least 2 samples");
  }
  std::vector<TokenizedText> tokens;
  tokens.reserve(samples.size());
  for (const auto& s : samples) tokens.push_back(tokenize(s.text));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      sum += (score_text(kernel, tokens[i], tokens[j]) + score_text(kernel, tokens[j], tokens[i])) / 2.0;
      ++pairs;
    }
  }
  return -sum / static_cast<double>(pairs);
}

}  // namespace lmue
