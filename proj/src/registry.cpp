#include "lmue/registry.hpp"

#include <algorithm>

#include "lmue/ensemble.hpp"
#include "lmue/errors.hpp"
#include "lmue/textmetrics.hpp"

namespace lmue {

const char* to_string(Capability c) {
  switch (c) {
    case Capability::TokenLogprobs: return "token_logprobs";
    case Capability::TokenAlternatives: return "token_alternatives";
    case Capability::UnconditionalLogprobs: return "unconditional_logprobs";
    case Capability::Samples: return "samples";
    case Capability::SampleLogprobs: return "sample_logprobs";
    case Capability::Nli: return "nli";
    case Capability::Ensemble: return "ensemble";
    case Capability::Embedding: return "embedding";
    case Capability::DensityFit: return "density_fit";
    case Capability::BackgroundFit: return "background_fit";
    case Capability::RdeFit: return "rde_fit";
    case Capability::HuqCalibration: return "huq_calibration";
    case Capability::PTrue: return "p_true";
    case Capability::Reference: return "reference";
  }
  return "?";
}

PairwiseScores NliCache::scores(const GenerationRecord& record) {
  std::string key = record.id;
  for (const auto& s : record.samples) key += '\x1f' + s.text;
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  PairwiseScores out;
  if (record.samples.size() == 1) {
    out.entail = Eigen::MatrixXd::Ones(1, 1);
    out.contra = Eigen::MatrixXd::Zero(1, 1);
  } else {
    std::vector<std::string> texts;
    texts.reserve(record.samples.size());
    for (const auto& s : record.samples) texts.push_back(s.text);
    out = scorer_(texts);
  }
  std::lock_guard lock(mu_);
  cache_.emplace(std::move(key), out);
  return out;
}

namespace {

using Fn = std::function<double(const GenerationRecord&, const EstimatorContext&)>;
using C = Capability;

const std::vector<C> kLogprobs = {C::TokenLogprobs};

void require_samples(const GenerationRecord& r, std::size_t min, const std::string& name) {
  if (r.samples.size() < min) {
    raise(ErrorKind::UnavailableInput, name + ": record '" + r.id + "' has " +
                                           std::to_string(r.samples.size()) +
                                           " samples, needs " + std::to_string(min));
  }
}

PairwiseScores nli_scores(const GenerationRecord& r, const EstimatorContext& ctx,
                          const std::string& name) {
  if (!ctx.nli) raise(ErrorKind::Capability, name + ": no NLI provider configured");
  return ctx.nli->scores(r);
}

SimilarityMatrix similarity(const GenerationRecord& r, const EstimatorContext& ctx,
                            SimilarityKernel kernel, const std::string& name) {
  require_samples(r, 2, name);
  if (is_nli(kernel)) {
    const PairwiseScores p = nli_scores(r, ctx, name);
    return build_similarity_matrix(r.samples, kernel, &p);
  }
  return build_similarity_matrix(r.samples, kernel);
}

const std::vector<double>& embedding_of(const GenerationRecord& r, const std::string& name) {
  if (!r.embedding) raise(ErrorKind::UnavailableInput, name + ": record '" + r.id + "' has no embedding");
  return *r.embedding;
}

const DensityModel& density_of(const EstimatorContext& ctx, const std::string& name) {
  if (!ctx.density) raise(ErrorKind::Capability, name + ": no density model loaded");
  return *ctx.density;
}

EstimatorEntry make(std::string name, std::string category, std::string box, std::string method,
                    std::string compute, std::string memory, bool training,
                    std::vector<C> inputs, Fn fn) {
  EstimatorEntry e;
  e.name = std::move(name);
  e.category = std::move(category);
  e.box = std::move(box);
  e.method = std::move(method);
  e.compute = std::move(compute);
  e.memory = std::move(memory);
  e.needs_training_data = training;
  e.requires_inputs = std::move(inputs);
  e.compute_fn = std::move(fn);
  return e;
}

std::vector<EstimatorEntry> build_entries() {
  std::vector<EstimatorEntry> v;
  const std::string info = "Information-based";
  const std::string meaning = "Meaning diversity";
  const std::string white = "White-box";
  const std::string black = "Black-box";

  v.push_back(make("msp", info, white, "Maximum sequence probability", "Low", "Low", false, kLogprobs,
                   [](const auto& r, const auto&) { return msp(r); }));
  v.push_back(make("perplexity", info, white, "Perplexity", "Low", "Low", false, kLogprobs,
                   [](const auto& r, const auto&) { return perplexity(r); }));
  v.push_back(make("mean_token_entropy", info, white, "Mean token entropy", "Low", "Low", false,
                   {C::TokenLogprobs, C::TokenAlternatives},
                   [](const auto& r, const auto& c) { return mean_token_entropy(r, c.info); }));
  v.push_back(make("mc_sequence_entropy", info, white, "Monte Carlo sequence entropy", "High", "Low",
                   false, {C::Samples, C::SampleLogprobs},
                   [](const auto& r, const auto&) { return mc_sequence_entropy(r, false); }));
  v.push_back(make("mc_normalized_sequence_entropy", info, white, "Monte Carlo sequence entropy",
                   "High", "Low", false, {C::Samples, C::SampleLogprobs},
                   [](const auto& r, const auto&) { return mc_sequence_entropy(r, true); }));
  v.push_back(make("pmi", info, white, "Pointwise mutual information (PMI)", "Medium", "Low", false,
                   {C::TokenLogprobs, C::UnconditionalLogprobs},
                   [](const auto& r, const auto&) { return pmi(r); }));
  v.push_back(make("cpmi", info, white, "Conditional PMI", "Medium", "Medium", false,
                   {C::TokenLogprobs, C::TokenAlternatives, C::UnconditionalLogprobs},
                   [](const auto& r, const auto& c) { return cpmi(r, c.info); }));

  v.push_back(make("semantic_entropy", meaning, white, "Semantic entropy", "High", "Low", false,
                   {C::Samples, C::SampleLogprobs, C::Nli}, [](const auto& r, const auto& c) {
                     require_samples(r, 1, "semantic_entropy");
                     const auto p = nli_scores(r, c, "semantic_entropy");
                     return semantic_entropy(r, cluster_bidirectional_entailment(p));
                   }));

  const std::string ens = "Ensembling";
  const std::string seq_row = "Sentence-level ensemble-based measures";
  const std::string tok_row = "Token-level ensemble-based measures";
  v.push_back(make("ensemble_seq_msp", ens, white, seq_row, "High", "High", true,
                   {C::TokenLogprobs, C::Ensemble},
                   [](const auto& r, const auto&) { return seq_msp_ensemble(r); }));
  v.push_back(make("ensemble_seq_rmi", ens, white, seq_row, "High", "High", true,
                   {C::TokenLogprobs, C::Ensemble},
                   [](const auto& r, const auto&) { return seq_rmi(r); }));
  for (auto m : {TokenMeasure::TotalEntropy, TokenMeasure::DataUncertainty,
                 TokenMeasure::MutualInformation, TokenMeasure::Epkl, TokenMeasure::Rmi}) {
    v.push_back(make(std::string("ensemble_tok_") + to_string(m), ens, white, tok_row, "High", "High",
                     true, {C::TokenLogprobs, C::Ensemble}, [m](const auto& r, const auto& c) {
                       return aggregate_token_measure(r, m, c.ensemble_average);
                     }));
  }

  const std::string dens = "Density-based";
  v.push_back(make("mahalanobis", dens, white, "Mahalanobis distance (MD)", "Low", "Low", true,
                   {C::Embedding, C::DensityFit}, [](const auto& r, const auto& c) {
                     const auto& h = embedding_of(r, "mahalanobis");
                     const auto& d = density_of(c, "mahalanobis");
                     if (!d.gaussian) raise(ErrorKind::Capability, "mahalanobis: no Gaussian fit loaded");
                     return mahalanobis(*d.gaussian, h);
                   }));
  v.push_back(make("rde", dens, white, "Robust density estimation (RDE)", "Low", "Low", true,
                   {C::Embedding, C::RdeFit}, [](const auto& r, const auto& c) {
                     const auto& h = embedding_of(r, "rde");
                     const auto& d = density_of(c, "rde");
                     if (!d.rde) raise(ErrorKind::Capability, "rde: no RDE fit loaded");
                     return rde_score(*d.rde, h);
                   }));
  v.push_back(make("rmd", dens, white, "Relative Mahalanobis distance (RMD)", "Low", "Low", true,
                   {C::Embedding, C::DensityFit, C::BackgroundFit}, [](const auto& r, const auto& c) {
                     const auto& h = embedding_of(r, "rmd");
                     const auto& d = density_of(c, "rmd");
                     if (!d.gaussian || !d.background) {
                       raise(ErrorKind::Capability, "rmd: needs both a Gaussian and a background fit");
                     }
                     return relative_mahalanobis(*d.gaussian, *d.background, h);
                   }));
  // HUQ resolves its component estimators through the registry at call time.
  v.push_back(make("huq", dens, white, "Hybrid Uncertainty Quantification (HUQ)", "Low", "Low", true,
                   {C::Embedding, C::DensityFit, C::HuqCalibration, C::TokenLogprobs},
                   [](const auto& r, const auto& c) {
                     const auto& d = density_of(c, "huq");
                     if (!d.huq) raise(ErrorKind::Capability, "huq: no HUQ calibration loaded");
                     const auto& reg = EstimatorRegistry::builtin();
                     const auto& de = reg.at(d.huq->density_estimator);
                     const auto& ie = reg.at(d.huq->info_estimator);
                     return huq_combine(*d.huq, de.compute_fn(r, c), ie.compute_fn(r, c));
                   }));

  v.push_back(make("p_true", "Reflexive", white, "p(True)", "Medium", "Low", false, {C::PTrue},
                   [](const auto& r, const auto&) { return p_true_uncertainty(r); }));

  v.push_back(make("num_semantic_sets", meaning, black, "Number of semantic sets (NumSets)", "High",
                   "Low", false, {C::Samples, C::Nli}, [](const auto& r, const auto& c) {
                     require_samples(r, 1, "num_semantic_sets");
                     return static_cast<double>(num_semantic_sets(nli_scores(r, c, "num_semantic_sets")));
                   }));

  for (auto kernel : {SimilarityKernel::Jaccard, SimilarityKernel::NliEntail, SimilarityKernel::NliContra}) {
    std::vector<C> inputs = {C::Samples};
    if (is_nli(kernel)) inputs.push_back(C::Nli);
    const std::string suffix = std::string("_") + to_string(kernel);

    const std::string eigv_name = "eigv" + suffix;
    v.push_back(make(eigv_name, meaning, black, "Sum of eigenvalues of the graph Laplacian (EigV)",
                     "High", "Low", false, inputs, [kernel, eigv_name](const auto& r, const auto& c) {
                       return eigv_laplacian(similarity(r, c, kernel, eigv_name));
                     }));
    const std::string deg_name = "degmat" + suffix;
    v.push_back(make(deg_name, meaning, black, "Degree matrix (Deg)", "High", "Low", false, inputs,
                     [kernel, deg_name](const auto& r, const auto& c) {
                       return degmat_uncertainty(similarity(r, c, kernel, deg_name));
                     }));
    const std::string ecc_name = "eccentricity" + suffix;
    v.push_back(make(ecc_name, meaning, black, "Eccentricity (Ecc)", "High", "Low", false, inputs,
                     [kernel, ecc_name](const auto& r, const auto& c) {
                       return eccentricity(similarity(r, c, kernel, ecc_name), c.eig_threshold).total;
                     }));
  }

  for (auto metric : {TextMetric::Rouge1, TextMetric::RougeL, TextMetric::Bleu}) {
    const std::string name = std::string("lexsim_") + to_string(metric);
    v.push_back(make(name, meaning, black, "Lexical similarity (LexSim)", "High", "Low", false,
                     {C::Samples}, [metric, name](const auto& r, const auto&) {
                       require_samples(r, 2, name);
                       return lexical_similarity(r.samples, metric);
                     }));
  }

  // Planted baselines for benchmark sanity checks.
  auto oracle = make("oracle", "Diagnostic", black, "", "Low", "Low", false, {C::Reference},
                     [](const auto& r, const auto&) {
                       if (!r.reference_text) {
                         raise(ErrorKind::UnavailableInput, "oracle: record '" + r.id + "' has no reference");
                       }
                       return -rougeL(tokenize(r.output_text), tokenize(*r.reference_text));
                     });
  oracle.diagnostic = true;
  v.push_back(std::move(oracle));
  auto constant = make("constant", "Diagnostic", black, "", "Low", "Low", false, {},
                       [](const auto&, const auto&) { return 0.0; });
  constant.diagnostic = true;
  v.push_back(std::move(constant));
  return v;
}

}  // namespace

const EstimatorRegistry& EstimatorRegistry::builtin() {
  static const EstimatorRegistry registry = [] {
    EstimatorRegistry r;
    r.entries_ = build_entries();
    return r;
  }();
  return registry;
}

EstimatorRegistry EstimatorRegistry::without(const std::set<std::string>& disabled) const {
  EstimatorRegistry r;
  for (const auto& e : entries_) {
    if (!disabled.count(e.name)) r.entries_.push_back(e);
  }
  return r;
}

EstimatorRegistry EstimatorRegistry::public_entries() const {
  EstimatorRegistry r;
  for (const auto& e : entries_) {
    if (!e.diagnostic) r.entries_.push_back(e);
  }
  return r;
}

const EstimatorEntry* EstimatorRegistry::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const EstimatorEntry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

std::vector<std::string> EstimatorRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

const EstimatorEntry& EstimatorRegistry::at(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  std::string valid;
  for (const auto& e : entries_) valid += (valid.empty() ? "" : ", ") + e.name;
  raise(ErrorKind::Usage, "unknown estimator '" + name + "'; valid names: " + valid);
}

double evaluate(const EstimatorEntry& entry, const GenerationRecord& record,
                const EstimatorContext& ctx) {
  return entry.compute_fn(record, ctx);
}

}  // namespace lmue
