#include "dhr/dataset_io.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dhr/error.hpp"

namespace dhr {

using nlohmann::json;

namespace {

[[noreturn]] void line_fail(std::size_t line, const std::string& msg) {
  fail(ErrorKind::kDataFormat, "line " + std::to_string(line) + ": " + msg);
}

template <typename T>
T field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) line_fail(line, std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    line_fail(line, std::string("field \"") + key + "\" has the wrong type");
  }
}

Hyperedge parse_edge(const json& rec, std::size_t d, std::size_t line) {
  if (!rec.is_object()) line_fail(line, "edge record must be a JSON object");
  for (const auto& [key, value] : rec.items()) {
    if (key != "vertices" && key != "ranking" && key != "covariates" && key != "timestamp") {
      line_fail(line, "unknown field \"" + key + "\"");
    }
  }
  Hyperedge e;
  e.vertices = field<std::vector<ObjectId>>(rec, "vertices", line);
  if (rec.contains("ranking") && !rec["ranking"].is_null()) {
    e.ranking = field<std::vector<ObjectId>>(rec, "ranking", line);
  }
  if (rec.contains("timestamp") && !rec["timestamp"].is_null()) {
    e.timestamp = field<std::string>(rec, "timestamp", line);
  }
  if (rec.contains("covariates") && !rec["covariates"].is_null()) {
    const json& cov = rec["covariates"];
    if (!cov.is_object()) line_fail(line, "\"covariates\" must map object ids to vectors");
    e.covariate_dim = d;
    e.covariates.reserve(e.vertices.size() * d);
    for (ObjectId v : e.vertices) {
      const std::string key = std::to_string(v);
      if (!cov.contains(key)) line_fail(line, "no covariates for object " + key);
      std::vector<double> row;
      try {
        row = cov[key].get<std::vector<double>>();
      } catch (const json::exception&) {
        line_fail(line, "covariates of object " + key + " must be a number array");
      }
      if (row.size() != d) {
        line_fail(line, "covariates of object " + key + " have dimension " +
                            std::to_string(row.size()) + ", expected " + std::to_string(d));
      }
      e.covariates.insert(e.covariates.end(), row.begin(), row.end());
    }
    if (cov.size() != e.vertices.size()) {
      line_fail(line, "covariates name objects outside the edge");
    }
  }
  return e;
}

}  // namespace

ComparisonDataset read_dataset(std::istream& in) {
  ComparisonDataset ds;
  bool have_header = false;
  std::string text;
  std::size_t line = 0;
  // One-edge scratch dataset so each record is validated with its own line.
  ComparisonDataset probe;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& ex) {
      line_fail(line, std::string("malformed JSON: ") + ex.what());
    }
    if (!have_header) {
      if (!rec.is_object() || !rec.contains("n") || rec.contains("vertices")) {
        line_fail(line, "expected header {\"n\":int,\"d\":int}");
      }
      ds.n = field<int>(rec, "n", line);
      const int d = rec.contains("d") ? field<int>(rec, "d", line) : 0;
      if (ds.n < 1) line_fail(line, "n must be >= 1");
      if (d < 0) line_fail(line, "d must be >= 0");
      ds.d = static_cast<std::size_t>(d);
      probe.n = ds.n;
      probe.d = ds.d;
      have_header = true;
      continue;
    }
    probe.edges.assign(1, parse_edge(rec, ds.d, line));
    try {
      probe.validate();
    } catch (const Error& ex) {
      line_fail(line, ex.what());
    }
    ds.edges.push_back(std::move(probe.edges.front()));
  }
  if (!have_header) fail(ErrorKind::kDataFormat, "dataset has no header record");
  return ds;
}

ComparisonDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open dataset '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (const Error& ex) {
    fail(ex.kind(), path.string() + ": " + ex.what());
  }
}

void write_dataset(std::ostream& out, const ComparisonDataset& dataset) {
  out << json{{"n", dataset.n}, {"d", dataset.d}}.dump() << '\n';
  for (const auto& e : dataset.edges) {
    json rec;
    rec["vertices"] = e.vertices;
    if (e.has_ranking()) rec["ranking"] = e.ranking;
    if (e.covariate_dim > 0 && e.has_covariates()) {
      json cov = json::object();
      for (std::size_t k = 0; k < e.size(); ++k) {
        const auto row = e.covariate_at(k);
        cov[std::to_string(e.vertices[k])] = std::vector<double>(row.begin(), row.end());
      }
      rec["covariates"] = std::move(cov);
    }
    if (e.timestamp) rec["timestamp"] = *e.timestamp;
    out << rec.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const ComparisonDataset& dataset) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  write_dataset(out, dataset);
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

json network_to_json(const NetworkParams& params) {
  return json{{"arch", {{"input_dim", params.arch.input_dim},
                        {"hidden_widths", params.arch.hidden_widths}}},
              {"box_radius", params.box_radius},
              {"sup_bound", params.sup_bound},
              {"phi", params.phi}};
}

NetworkParams network_from_json(const json& j) {
  try {
    NetworkParams params;
    params.arch.input_dim = j.at("arch").at("input_dim").get<std::size_t>();
    params.arch.hidden_widths = j.at("arch").at("hidden_widths").get<std::vector<std::size_t>>();
    params.box_radius = j.at("box_radius").get<double>();
    params.sup_bound = j.at("sup_bound").get<double>();
    params.phi = j.at("phi").get<std::vector<double>>();
    params.validate();
    return params;
  } catch (const json::exception& ex) {
    fail(ErrorKind::kDataFormat, std::string("bad network checkpoint: ") + ex.what());
  } catch (const Error& ex) {
    fail(ErrorKind::kDataFormat, std::string("bad network checkpoint: ") + ex.what());
  }
}

json effect_to_json(const FitResult& fit) {
  json j;
  const ScoreFn& raw = *fit.raw_effect;
  if (const auto* mlp = dynamic_cast<const MlpScore*>(&raw)) {
    j = network_to_json(mlp->network());
    j["kind"] = "mlp";
  } else if (const auto* lin = dynamic_cast<const LinearScore*>(&raw)) {
    const auto w = lin->params();
    j["kind"] = "linear";
    j["weights"] = std::vector<double>(w.begin(), w.end());
  } else if (dynamic_cast<const ZeroScore*>(&raw)) {
    j["kind"] = "zero";
  } else {
    fail(ErrorKind::kInvalidArgument, "effect type cannot be serialized");
  }
  j["center"] = fit.f_hat ? fit.f_hat->shift() : 0.0;
  return j;
}

void effect_from_json(const json& j, FitResult& fit) {
  std::string kind;
  double center = 0.0;
  try {
    kind = j.at("kind").get<std::string>();
    center = j.value("center", 0.0);
  } catch (const json::exception& ex) {
    fail(ErrorKind::kDataFormat, std::string("bad effect checkpoint: ") + ex.what());
  }
  if (kind == "mlp") {
    NetworkParams net = network_from_json(j);
    fit.network = net;
    fit.raw_effect = std::make_shared<const MlpScore>(std::move(net));
  } else if (kind == "linear") {
    try {
      fit.raw_effect =
          std::make_shared<const LinearScore>(j.at("weights").get<std::vector<double>>());
    } catch (const json::exception& ex) {
      fail(ErrorKind::kDataFormat, std::string("bad linear checkpoint: ") + ex.what());
    }
  } else if (kind == "zero") {
    fit.raw_effect = std::make_shared<const ZeroScore>();
  } else {
    fail(ErrorKind::kDataFormat, "unknown effect kind '" + kind + "'");
  }
  fit.f_hat = std::make_shared<const ShiftedScore>(fit.raw_effect, center);
}

json fit_to_json(const FitResult& fit, const std::string& checkpoint_path) {
  const auto u = fit.u_hat.values();
  return json{{"model", std::string(to_string(fit.tag))},
              {"u_hat", std::vector<double>(u.begin(), u.end())},
              {"checkpoint", checkpoint_path},
              {"train_curve", fit.train_curve},
              {"val_curve", fit.val_curve},
              {"existence_ok", fit.existence_ok},
              {"warnings", fit.warnings},
              {"epochs_run", fit.epochs_run},
              {"best_epoch", fit.best_epoch}};
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& ex) {
    fail(ErrorKind::kDataFormat, path.string() + ": " + ex.what());
  }
}

}  // namespace

void save_fit(const std::filesystem::path& result_path,
              const std::filesystem::path& checkpoint_path, const FitResult& fit,
              const json& metrics) {
  write_json(checkpoint_path, effect_to_json(fit));
  // Stored relative to the record when both share a directory.
  std::string ref = checkpoint_path.string();
  if (checkpoint_path.parent_path() == result_path.parent_path()) {
    ref = checkpoint_path.filename().string();
  }
  json record = fit_to_json(fit, ref);
  record["metrics"] = metrics;
  write_json(result_path, record);
}

FitResult load_fit(const std::filesystem::path& result_path) {
  const json record = read_json(result_path);
  FitResult fit;
  std::filesystem::path checkpoint;
  try {
    const auto tag = parse_model_tag(record.at("model").get<std::string>());
    if (!tag) fail(ErrorKind::kDataFormat, "unknown model tag in " + result_path.string());
    fit.tag = *tag;
    fit.u_hat = UtilityVector(record.at("u_hat").get<std::vector<double>>());
    fit.train_curve = record.value("train_curve", std::vector<double>{});
    fit.val_curve = record.value("val_curve", std::vector<double>{});
    fit.existence_ok = record.value("existence_ok", true);
    fit.warnings = record.value("warnings", std::vector<std::string>{});
    fit.epochs_run = record.value("epochs_run", 0);
    fit.best_epoch = record.value("best_epoch", 0);
    checkpoint = record.at("checkpoint").get<std::string>();
  } catch (const json::exception& ex) {
    fail(ErrorKind::kDataFormat, result_path.string() + ": " + ex.what());
  }
  if (checkpoint.is_relative()) checkpoint = result_path.parent_path() / checkpoint;
  effect_from_json(read_json(checkpoint), fit);
  return fit;
}

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string text;
  std::size_t line = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) line_fail(line, "expected 'key = value'");
    std::string key = trim(text.substr(0, eq));
    if (key.empty()) line_fail(line, "empty key");
    values[key] = trim(text.substr(eq + 1));
  }
  return values;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config '" + path.string() + "'");
  try {
    return parse_key_values(in);
  } catch (const Error& ex) {
    fail(ex.kind(), path.string() + ": " + ex.what());
  }
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    fail(ErrorKind::kInvalidArgument, key + ": '" + v + "' is not a number");
  }
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    fail(ErrorKind::kInvalidArgument, key + ": '" + v + "' is not an integer");
  }
  return out;
}

}  // namespace

void apply_train_overrides(const std::map<std::string, std::string>& values,
                           TrainConfig& config) {
  for (const auto& [key, v] : values) {
    if (key == "eta_u") {
      config.eta_u = to_double(key, v);
    } else if (key == "eta_phi") {
      config.eta_phi = to_double(key, v);
    } else if (key == "epochs") {
      config.epochs = static_cast<int>(to_integer(key, v));
    } else if (key == "batch_size") {
      const long long b = to_integer(key, v);
      if (b < 1) fail(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
      config.batch_size = static_cast<std::size_t>(b);
    } else if (key == "optimizer") {
      if (v == "sgd") {
        config.optimizer = OptimizerKind::kSgd;
      } else if (v == "adam") {
        config.optimizer = OptimizerKind::kAdam;
      } else {
        fail(ErrorKind::kInvalidArgument, "optimizer must be 'sgd' or 'adam'");
      }
    } else if (key == "adam_beta1") {
      config.adam.beta1 = to_double(key, v);
    } else if (key == "adam_beta2") {
      config.adam.beta2 = to_double(key, v);
    } else if (key == "adam_epsilon") {
      config.adam.epsilon = to_double(key, v);
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(to_integer(key, v));
    } else if (key == "grad_clip") {
      if (v == "none" || v.empty()) {
        config.grad_clip.reset();
      } else {
        config.grad_clip = to_double(key, v);
      }
    } else if (key == "validation_fraction") {
      config.validation_fraction = to_double(key, v);
    } else if (key == "patience") {
      config.patience = static_cast<int>(to_integer(key, v));
    } else if (key == "existence_policy") {
      if (v == "abort") {
        config.existence_policy = ExistencePolicy::kAbort;
      } else if (v == "warn") {
        config.existence_policy = ExistencePolicy::kWarn;
      } else {
        fail(ErrorKind::kInvalidArgument, "existence_policy must be 'abort' or 'warn'");
      }
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown training key '" + key + "'");
    }
  }
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace dhr
