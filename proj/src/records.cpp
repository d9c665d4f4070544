#include "lmue/records.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lmue/errors.hpp"

namespace lmue {

using nlohmann::json;

namespace {

constexpr double kMassTolerance = 1e-6;
constexpr double kSumTolerance = 1e-6;

void check_step(const std::string& id, const std::string& where, const TokenStep& step,
                ValidationReport& out) {
  auto add = [&](std::string field, std::string message) {
    out.push_back({id, std::move(field), where + ": " + std::move(message)});
  };
  if (step.token_id < 0) add("token_id", "negative token id");
  if (!(step.logprob <= 0.0)) add("logprob", "logprob must be <= 0");
  if (step.unconditional_logprob && !(*step.unconditional_logprob <= 0.0)) {
    add("unconditional_logprob", "unconditional logprob must be <= 0");
  }
  if (step.alternatives.empty()) return;

  double mass = 0.0;
  bool sorted = true;
  bool positive = false;
  bool chosen_present = false;
  for (std::size_t i = 0; i < step.alternatives.size(); ++i) {
    const auto& alt = step.alternatives[i];
    if (!(alt.logprob <= 0.0)) positive = true;
    if (i > 0 && alt.logprob > step.alternatives[i - 1].logprob) sorted = false;
    if (alt.token_id == step.token_id) chosen_present = true;
    mass += std::exp(alt.logprob);
  }
  if (positive) add("alternatives logprob", "alternative logprob must be <= 0");
  if (!sorted) add("alternatives order", "alternatives not sorted by descending logprob");
  if (mass > 1.0 + kMassTolerance) {
    std::ostringstream msg;
    msg << "alternatives mass " << mass << " exceeds 1";
    add("alternatives mass", msg.str());
  }
  if (!chosen_present) add("alternatives membership", "chosen token missing from alternatives");
}

}  // namespace

ValidationReport validate_record(const GenerationRecord& r) {
  ValidationReport out;
  const std::string& id = r.id;
  if (id.empty()) out.push_back({id, "id", "empty record id"});

  for (std::size_t l = 0; l < r.output_tokens.size(); ++l) {
    check_step(id, "output_tokens[" + std::to_string(l) + "]", r.output_tokens[l], out);
  }

  for (std::size_t k = 0; k < r.samples.size(); ++k) {
    const auto& s = r.samples[k];
    const std::string where = "samples[" + std::to_string(k) + "]";
    if (!(s.total_logprob <= 0.0)) {
      out.push_back({id, "total_logprob", where + ": total logprob must be <= 0"});
    }
    if (s.length < 1) out.push_back({id, "length", where + ": length must be >= 1"});
    if (!s.tokens.empty()) {
      double sum = 0.0;
      for (std::size_t l = 0; l < s.tokens.size(); ++l) {
        check_step(id, where + ".tokens[" + std::to_string(l) + "]", s.tokens[l], out);
        sum += s.tokens[l].logprob;
      }
      if (std::abs(sum - s.total_logprob) > kSumTolerance) {
        out.push_back({id, "total_logprob consistency",
                       where + ": total logprob differs from the sum of step logprobs"});
      }
      if (static_cast<std::size_t>(s.length) != s.tokens.size()) {
        out.push_back({id, "length consistency", where + ": length differs from token count"});
      }
    }
  }

  bool misaligned = false;
  for (std::size_t m = 0; m < r.ensemble_traces.size(); ++m) {
    const auto& trace = r.ensemble_traces[m];
    if (trace.steps.size() != r.ensemble_traces.front().steps.size() ||
        trace.steps.size() != r.output_tokens.size()) {
      misaligned = true;
    }
    for (std::size_t l = 0; l < trace.steps.size(); ++l) {
      double sum = 0.0;
      bool out_of_range = false;
      for (const auto& [tok, p] : trace.steps[l]) {
        if (!(p >= 0.0 && p <= 1.0)) out_of_range = true;
        sum += p;
      }
      const std::string where =
          "ensemble_traces[" + std::to_string(m) + "].steps[" + std::to_string(l) + "]";
      if (out_of_range) out.push_back({id, "ensemble probability", where + ": probability outside [0,1]"});
      if (std::abs(sum - 1.0) > kMassTolerance) {
        out.push_back({id, "ensemble mass", where + ": distribution does not sum to 1"});
      }
    }
  }
  if (misaligned) {
    out.push_back({id, "ensemble alignment",
                   "ensemble traces must all have one step per greedy output token"});
  }

  if (r.embedding) {
    for (double v : *r.embedding) {
      if (!std::isfinite(v)) {
        out.push_back({id, "embedding", "non-finite embedding component"});
        break;
      }
    }
  }
  if (r.p_true && !(*r.p_true >= 0.0 && *r.p_true <= 1.0)) {
    out.push_back({id, "p_true", "p_true outside [0,1]"});
  }
  return out;
}

double greedy_logprob(const GenerationRecord& record) {
  return std::accumulate(record.output_tokens.begin(), record.output_tokens.end(), 0.0,
                         [](double acc, const TokenStep& s) { return acc + s.logprob; });
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

json step_to_json(const TokenStep& s) {
  json alts = json::array();
  for (const auto& a : s.alternatives) alts.push_back(json::array({a.token_id, a.logprob}));
  json j = {{"token_id", s.token_id},
            {"token_text", s.token_text},
            {"logprob", s.logprob},
            {"alternatives", std::move(alts)}};
  if (s.unconditional_logprob) j["unconditional_logprob"] = *s.unconditional_logprob;
  return j;
}

TokenStep step_from_json(const json& j) {
  TokenStep s;
  s.token_id = j.at("token_id").get<TokenId>();
  s.token_text = j.at("token_text").get<std::string>();
  s.logprob = j.at("logprob").get<double>();
  if (auto it = j.find("alternatives"); it != j.end()) {
    for (const auto& a : *it) {
      s.alternatives.push_back({a.at(0).get<TokenId>(), a.at(1).get<double>()});
    }
  }
  if (auto it = j.find("unconditional_logprob"); it != j.end() && !it->is_null()) {
    s.unconditional_logprob = it->get<double>();
  }
  return s;
}

void normalize_distribution(StepDistribution& dist) {
  double sum = 0.0;
  for (const auto& [tok, p] : dist) sum += p;
  // Already-normalized input stays bit-identical so save/load round-trips.
  if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12) {
    for (auto& [tok, p] : dist) p /= sum;
  }
}

}  // namespace

json record_to_json(const GenerationRecord& r) {
  json tokens = json::array();
  for (const auto& s : r.output_tokens) tokens.push_back(step_to_json(s));

  json samples = json::array();
  for (const auto& s : r.samples) {
    json js = {{"text", s.text}, {"total_logprob", s.total_logprob}, {"length", s.length}};
    if (!s.tokens.empty()) {
      json st = json::array();
      for (const auto& t : s.tokens) st.push_back(step_to_json(t));
      js["tokens"] = std::move(st);
    }
    samples.push_back(std::move(js));
  }

  json traces = json::array();
  for (const auto& t : r.ensemble_traces) {
    json steps = json::array();
    for (const auto& dist : t.steps) {
      json d = json::array();
      for (const auto& [tok, p] : dist) d.push_back(json::array({tok, p}));
      steps.push_back(std::move(d));
    }
    traces.push_back({{"model_id", t.model_id}, {"steps", std::move(steps)}});
  }

  json j = {{"id", r.id},
            {"input_text", r.input_text},
            {"output_text", r.output_text},
            {"output_tokens", std::move(tokens)},
            {"samples", std::move(samples)},
            {"ensemble_traces", std::move(traces)}};
  if (r.embedding) j["embedding"] = *r.embedding;
  if (r.reference_text) j["reference_text"] = *r.reference_text;
  if (r.p_true) j["p_true"] = *r.p_true;
  return j;
}

GenerationRecord record_from_json(const json& j) {
  if (!j.is_object()) raise(ErrorKind::Parse, "record is not an object");
  GenerationRecord r;
  r.id = j.at("id").get<std::string>();
  r.input_text = j.value("input_text", std::string{});
  r.output_text = j.value("output_text", std::string{});
  if (auto it = j.find("output_tokens"); it != j.end()) {
    for (const auto& s : *it) r.output_tokens.push_back(step_from_json(s));
  }
  if (auto it = j.find("samples"); it != j.end()) {
    for (const auto& js : *it) {
      SampledOutput s;
      s.text = js.at("text").get<std::string>();
      s.total_logprob = js.at("total_logprob").get<double>();
      s.length = js.at("length").get<int>();
      if (auto t = js.find("tokens"); t != js.end()) {
        for (const auto& st : *t) s.tokens.push_back(step_from_json(st));
      }
      r.samples.push_back(std::move(s));
    }
  }
  if (auto it = j.find("ensemble_traces"); it != j.end()) {
    for (const auto& jt : *it) {
      EnsembleTrace t;
      t.model_id = jt.at("model_id").get<std::string>();
      for (const auto& jd : jt.at("steps")) {
        StepDistribution d;
        for (const auto& e : jd) d.emplace_back(e.at(0).get<TokenId>(), e.at(1).get<double>());
        normalize_distribution(d);
        t.steps.push_back(std::move(d));
      }
      r.ensemble_traces.push_back(std::move(t));
    }
  }
  if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
    r.embedding = it->get<std::vector<double>>();
  }
  if (auto it = j.find("reference_text"); it != j.end() && !it->is_null()) {
    r.reference_text = it->get<std::string>();
  }
  if (auto it = j.find("p_true"); it != j.end() && !it->is_null()) {
    r.p_true = it->get<double>();
  }
  return r;
}

GenerationRecord parse_record_line(const std::string& line) {
  try {
    return record_from_json(json::parse(line));
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, e.what());
  }
}

std::string serialize_record_line(const GenerationRecord& record) {
  return record_to_json(record).dump();
}

namespace {

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

void load_into(const std::filesystem::path& path, Dataset& ds, std::set<std::string>& seen) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open record file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    GenerationRecord r;
    try {
      r = parse_record_line(line);
    } catch (const Error& e) {
      raise(ErrorKind::Parse,
            path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto report = validate_record(r);
    if (!report.empty()) {
      const auto& v = report.front();
      raise(ErrorKind::Validation, "record '" + v.record_id + "' field '" + v.field +
                                       "': " + v.message + " (" + path.string() + ":" +
                                       std::to_string(line_no) + ")");
    }
    if (!seen.insert(r.id).second) {
      raise(ErrorKind::Validation, "record '" + r.id + "' field 'id': duplicate id (" +
                                       path.string() + ":" + std::to_string(line_no) + ")");
    }
    ds.records.push_back(std::move(r));
  }
  if (in.bad()) raise(ErrorKind::Io, "read failure on " + path.string());
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  return load_datasets({path});
}

Dataset load_datasets(const std::vector<std::filesystem::path>& paths) {
  Dataset ds;
  std::set<std::string> seen;
  for (const auto& p : paths) load_into(p, ds, seen);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write record file " + path.string());
  for (const auto& r : dataset.records) out << serialize_record_line(r) << '\n';
  out.flush();
  if (!out) raise(ErrorKind::Io, "write failure on " + path.string());
}

std::vector<std::vector<double>> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open embedding file " + path.string());
  std::vector<std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      if (j.is_array()) {
        out.push_back(j.get<std::vector<double>>());
      } else if (j.is_object() && j.contains("embedding")) {
        out.push_back(j.at("embedding").get<std::vector<double>>());
      } else {
        raise(ErrorKind::Parse, "expected an array or an object with 'embedding'");
      }
    } catch (const json::exception& e) {
      raise(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      raise(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!out.empty() && out.back().size() != out.front().size()) {
      raise(ErrorKind::Shape, path.string() + ":" + std::to_string(line_no) +
                                  ": embedding dimension differs from the first line");
    }
  }
  return out;
}

}  // namespace lmue
