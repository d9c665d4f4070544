#include "lmue/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "lmue/errors.hpp"

namespace lmue {

namespace {

Eigen::MatrixXd to_matrix(const Embeddings& embeddings) {
  if (embeddings.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(embeddings.front().size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (static_cast<Eigen::Index>(embeddings[i].size()) != dim) {
      raise(ErrorKind::Shape, "embedding " + std::to_string(i) + " has dimension " +
                                  std::to_string(embeddings[i].size()) + ", expected " +
                                  std::to_string(dim));
    }
    x.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(embeddings[i].data(), dim);
  }
  return x;
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Moments moments(const Eigen::MatrixXd& x) {
  Moments m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  m.cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  m.cov = (m.cov + m.cov.transpose()) / 2.0;
  return m;
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& sigma) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 1e-12 * std::max(1.0, hi))) {
    raise(ErrorKind::Numeric,
          "covariance is singular after regularization; increase the regularization");
  }
  const Eigen::Index d = sigma.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    raise(ErrorKind::Numeric, "covariance is not positive definite; increase the regularization");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  inv = (inv + inv.transpose()) / 2.0;
  const double err = (inv * sigma - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
  if (!(err <= 1e-4)) {
    raise(ErrorKind::Numeric, "covariance inverse is inaccurate; increase the regularization");
  }
  return inv;
}

GaussianFit fit_from_matrix(const Eigen::MatrixXd& x, std::optional<double> reg) {
  if (x.rows() < 2) raise(ErrorKind::InsufficientData, "Gaussian fit needs at least 2 points");
  const Eigen::Index d = x.cols();
  Moments m = moments(x);
  const double trace = m.cov.trace();
  double r;
  if (reg) {
    if (*reg < 0.0) raise(ErrorKind::Input, "regularization must be >= 0");
    r = *reg;
  } else {
    r = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-6;
  }
  GaussianFit fit;
  fit.dim = static_cast<int>(d);
  fit.mu = m.mean;
  fit.degenerate = !(trace > 0.0);
  fit.sigma = m.cov;
  fit.sigma.diagonal().array() += r;
  fit.sigma_inv = checked_inverse(fit.sigma);
  return fit;
}

double log_det_ridged(const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd c = cov;
  const double p = static_cast<double>(cov.rows());
  c.diagonal().array() += 1e-12 * (cov.trace() / p + 1.0);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

// Indices of the h points with the smallest Mahalanobis distance under the
// given moments; ties broken by index.
std::vector<Eigen::Index> concentrate(const Eigen::MatrixXd& x, const Moments& m, Eigen::Index h) {
  Eigen::MatrixXd c = m.cov;
  c.diagonal().array() += 1e-12 * (m.cov.trace() / static_cast<double>(c.rows()) + 1.0);
  const Eigen::LDLT<Eigen::MatrixXd> solver(c);
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd d = x.row(i).transpose() - m.mean;
    dist.emplace_back(d.dot(solver.solve(d)), i);
  }
  std::sort(dist.begin(), dist.end());
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(h));
  for (Eigen::Index i = 0; i < h; ++i) out.push_back(dist[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GaussianFit fit_gaussian(const Embeddings& embeddings, std::optional<double> reg) {
  if (embeddings.size() < 2) raise(ErrorKind::InsufficientData, "Gaussian fit needs at least 2 points");
  return fit_from_matrix(to_matrix(embeddings), reg);
}

GaussianFit gaussian_from_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
    raise(ErrorKind::Shape, "covariance does not match the centroid dimension");
  }
  GaussianFit fit;
  fit.dim = static_cast<int>(mu.size());
  fit.mu = mu;
  fit.sigma = sigma;
  fit.sigma_inv = checked_inverse(sigma);
  return fit;
}

double mahalanobis(const GaussianFit& fit, const Eigen::VectorXd& h) {
  if (h.size() != fit.mu.size()) {
    raise(ErrorKind::Shape, "embedding has dimension " + std::to_string(h.size()) +
                                ", fit expects " + std::to_string(fit.mu.size()));
  }
  const Eigen::VectorXd d = h - fit.mu;
  return std::max(0.0, d.dot(fit.sigma_inv * d));
}

double mahalanobis(const GaussianFit& fit, const std::vector<double>& h) {
  return mahalanobis(fit, Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size())));
}

double relative_mahalanobis(const GaussianFit& fit, const GaussianFit& background,
                            const std::vector<double>& h) {
  if (fit.dim != background.dim) raise(ErrorKind::Shape, "fit and background dimensions differ");
  return mahalanobis(fit, h) - mahalanobis(background, h);
}

GaussianFit fit_mcd(const Eigen::MatrixXd& x, const McdOptions& options, std::optional<double> reg) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < p + 2) raise(ErrorKind::InsufficientData, "MCD needs more points than dimensions + 1");
  if (!(options.support_fraction > 0.0 && options.support_fraction <= 1.0)) {
    raise(ErrorKind::Input, "support fraction must lie in (0, 1]");
  }
  auto h = static_cast<Eigen::Index>(std::ceil(options.support_fraction * static_cast<double>(n)));
  h = std::clamp(h, p + 1, n);
  if (h >= n) return fit_from_matrix(x, reg);

  std::mt19937_64 rng(options.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> best_subset;
  double best_logdet = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Partial Fisher-Yates with an explicit modulo draw keeps the subset
    // sequence identical across standard libraries.
    for (Eigen::Index i = 0; i < h; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n - i));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<Eigen::Index> subset(order.begin(), order.begin() + h);
    std::sort(subset.begin(), subset.end());

    Moments m = moments(gather_rows(x, subset));
    double logdet = log_det_ridged(m.cov);
    for (int step = 0; step < options.max_csteps; ++step) {
      auto next = concentrate(x, m, h);
      Moments nm = moments(gather_rows(x, next));
      const double nd = log_det_ridged(nm.cov);
      if (!(nd < logdet - 1e-12)) break;
      subset = std::move(next);
      m = std::move(nm);
      logdet = nd;
    }
    if (logdet < best_logdet) {
      best_logdet = logdet;
      best_subset = subset;
    }
  }
  return fit_from_matrix(gather_rows(x, best_subset), reg);
}

RdeFit fit_rde(const Embeddings& embeddings, int target_dim, const McdOptions& options,
               std::optional<double> reg) {
  const Eigen::MatrixXd x = to_matrix(embeddings);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (target_dim < 1 || target_dim >= d) {
    raise(ErrorKind::Input, "target_dim must lie in [1, dim)");
  }
  if (n <= target_dim + 1) {
    raise(ErrorKind::InsufficientData, "RDE needs more than target_dim + 1 points");
  }
  const Moments m = moments(x);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.cov);
  RdeFit fit;
  fit.mean = m.mean;
  fit.projection.resize(d, target_dim);
  double kept = 0.0;
  for (int c = 0; c < target_dim; ++c) {
    const Eigen::Index src = d - 1 - c;  // eigenvalues ascend
    fit.projection.col(c) = eig.eigenvectors().col(src);
    kept += std::max(0.0, eig.eigenvalues()(src));
  }
  const double total = std::max(0.0, eig.eigenvalues().sum());
  fit.explained_variance = total > 0.0 ? std::min(1.0, kept / total) : 1.0;

  const Eigen::MatrixXd reduced = (x.rowwise() - m.mean.transpose()) * fit.projection;
  fit.reduced_fit = fit_mcd(reduced, options, reg);
  return fit;
}

Eigen::VectorXd rde_project(const RdeFit& fit, const std::vector<double>& h) {
  if (static_cast<Eigen::Index>(h.size()) != fit.mean.size()) {
    raise(ErrorKind::Shape, "embedding dimension does not match the RDE fit");
  }
  const Eigen::Map<const Eigen::VectorXd> v(h.data(), static_cast<Eigen::Index>(h.size()));
  return fit.projection.transpose() * (v - fit.mean);
}

double rde_score(const RdeFit& fit, const std::vector<double>& h) {
  return mahalanobis(fit.reduced_fit, rde_project(fit, h));
}

double quantile_rank(const std::vector<double>& calibration, double score) {
  if (calibration.empty()) raise(ErrorKind::Input, "empty calibration list");
  const auto below = std::count_if(calibration.begin(), calibration.end(),
                                   [score](double c) { return c <= score; });
  return static_cast<double>(below) / static_cast<double>(calibration.size());
}

double huq_combine(const HuqConfig& cfg, double density_score, double info_score) {
  if (cfg.calibration_density.empty() || cfg.calibration_info.empty()) {
    raise(ErrorKind::Input, "HUQ calibration scores are missing");
  }
  if (cfg.calibration_density.size() != cfg.calibration_info.size()) {
    raise(ErrorKind::Input, "HUQ calibration lists differ in length");
  }
  if (cfg.calibration_density.size() < 10) {
    raise(ErrorKind::Input, "HUQ calibration needs at least 10 scores");
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) raise(ErrorKind::Input, "HUQ alpha must lie in [0,1]");
  const double rd = quantile_rank(cfg.calibration_density, density_score);
  const double ri = quantile_rank(cfg.calibration_info, info_score);
  return cfg.alpha * rd + (1.0 - cfg.alpha) * ri;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'L', 'M', 'U', 'E', 'D', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void vec(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void mat(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void raw(const std::string& s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u32();
    return std::string(take(n), n);
  }
  Eigen::VectorXd vec(std::uint64_t n) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  Eigen::MatrixXd mat(std::uint64_t rows, std::uint64_t cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    return m;
  }
  const char* take(std::size_t n) {
    if (pos_ + n > data_.size()) raise(ErrorKind::Parse, "density model file is truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

void write_gaussian(Writer& w, const GaussianFit& g) {
  w.u64(static_cast<std::uint64_t>(g.mu.size()));
  w.u8(g.degenerate ? 1 : 0);
  w.vec(g.mu);
  w.mat(g.sigma);
  w.mat(g.sigma_inv);
}

GaussianFit read_gaussian(Reader& r) {
  GaussianFit g;
  const auto dim = r.u64();
  if (dim > (1u << 20)) raise(ErrorKind::Parse, "implausible dimension in density model file");
  g.dim = static_cast<int>(dim);
  g.degenerate = r.u8() != 0;
  g.mu = r.vec(dim);
  g.sigma = r.mat(dim, dim);
  g.sigma_inv = r.mat(dim, dim);
  return g;
}

void write_section(Writer& out, std::uint32_t tag, const Writer& payload) {
  out.u32(tag);
  out.u64(payload.bytes().size());
  out.raw(payload.bytes());
}

}  // namespace

void save_density_model(const DensityModel& model, const std::filesystem::path& path) {
  Writer w;
  w.raw(std::string(kMagic, sizeof kMagic));
  w.u32(kVersion);
  const std::uint32_t sections = (model.gaussian ? 1 : 0) + (model.background ? 1 : 0) +
                                 (model.rde ? 1 : 0) + (model.huq ? 1 : 0);
  w.u32(sections);
  if (model.gaussian) {
    Writer p;
    write_gaussian(p, *model.gaussian);
    write_section(w, 1, p);
  }
  if (model.background) {
    Writer p;
    write_gaussian(p, *model.background);
    write_section(w, 2, p);
  }
  if (model.rde) {
    Writer p;
    const auto& f = *model.rde;
    p.u64(static_cast<std::uint64_t>(f.projection.rows()));
    p.u64(static_cast<std::uint64_t>(f.projection.cols()));
    p.f64(f.explained_variance);
    p.vec(f.mean);
    p.mat(f.projection);
    write_gaussian(p, f.reduced_fit);
    write_section(w, 3, p);
  }
  if (model.huq) {
    Writer p;
    const auto& h = *model.huq;
    p.f64(h.alpha);
    p.u64(h.calibration_density.size());
    for (double v : h.calibration_density) p.f64(v);
    for (double v : h.calibration_info) p.f64(v);
    p.str(h.density_estimator);
    p.str(h.info_estimator);
    write_section(w, 4, p);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write density model " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) raise(ErrorKind::Io, "write failure on " + path.string());
}

DensityModel load_density_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open density model " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    raise(ErrorKind::Parse, path.string() + " is not a density model file");
  }
  const auto version = r.u32();
  if (version != kVersion) {
    raise(ErrorKind::Parse, "unsupported density model version " + std::to_string(version));
  }
  DensityModel model;
  const auto sections = r.u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    const auto tag = r.u32();
    const auto size = r.u64();
    const auto start = r.pos();
    switch (tag) {
      case 1: model.gaussian = read_gaussian(r); break;
      case 2: model.background = read_gaussian(r); break;
      case 3: {
        RdeFit f;
        const auto dim = r.u64();
        const auto target = r.u64();
        f.explained_variance = r.f64();
        f.mean = r.vec(dim);
        f.projection = r.mat(dim, target);
        f.reduced_fit = read_gaussian(r);
        model.rde = std::move(f);
        break;
      }
      case 4: {
        HuqConfig h;
        h.alpha = r.f64();
        const auto n = r.u64();
        for (std::uint64_t i = 0; i < n; ++i) h.calibration_density.push_back(r.f64());
        for (std::uint64_t i = 0; i < n; ++i) h.calibration_info.push_back(r.f64());
        h.density_estimator = r.str();
        h.info_estimator = r.str();
        model.huq = std::move(h);
        break;
      }
      default: r.take(static_cast<std::size_t>(size)); break;  // unknown section
    }
    if (r.pos() - start != size) raise(ErrorKind::Parse, "density model section size mismatch");
  }
  return model;
}

}  // namespace lmue
