#pragma once

// Experiment configuration and driver: builds y = A x + noise from a ground
// truth, runs vanilla / equivariant / viscosity-stabilized loops, and writes
// trace.csv, summary.json and reconstructions under the output directory.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vista/analysis.hpp"
#include "vista/bridge.hpp"
#include "vista/denoiser.hpp"
#include "vista/equivariant.hpp"
#include "vista/error.hpp"
#include "vista/forward_model.hpp"
#include "vista/image.hpp"
#include "vista/image_io.hpp"
#include "vista/nlm.hpp"
#include "vista/pnp.hpp"
#include "vista/viscosity.hpp"

namespace vista {

using Json = nlohmann::json;

enum class TaskType { identity, gaussian_deblur, motion_deblur, superres };
enum class AlgorithmType { pgd, hqs, admm };
enum class DenoiserType { identity, gaussian, scaled_identity, unsharp, nlm, dsg_nlm, bridge };
enum class MethodType { vanilla, equivariant, vista };
enum class ViscosityOperatorType { nlm, scaled_identity };

struct KernelSpec {
  std::string source = "builtin";  // builtin | file
  std::optional<std::size_t> size;  // builtin default: 25 (deblur), 9 (superres)
  std::optional<double> sigma;      // builtin default: 1.6 (deblur), factor (superres)
  std::string path;
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

struct TaskConfig {
  TaskType type = TaskType::gaussian_deblur;
  std::size_t factor = 2;
  KernelSpec kernel;
  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

struct AlgorithmConfig {
  AlgorithmType type = AlgorithmType::pgd;
  double gamma = 1.0;
  double mu = 1.0;
  double alpha = 1.0;
  CgSettings cg;
  friend bool operator==(const AlgorithmConfig&, const AlgorithmConfig&) = default;
};

struct DenoiserConfig {
  DenoiserType type = DenoiserType::gaussian;
  double sigma = 1.0;        // gaussian
  double beta = 0.95;        // scaled_identity
  double lambda = 1.5;       // unsharp
  double base_sigma = 0.4;   // unsharp
  NlmParams nlm;             // nlm, dsg_nlm (guide = x0)
  std::vector<std::string> command;  // bridge over a subprocess
  std::string host;                  // bridge over TCP when command is empty
  std::uint16_t port = 0;
  std::size_t timeout_ms = 30000;
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct ViscosityOperatorConfig {
  ViscosityOperatorType type = ViscosityOperatorType::nlm;
  double rho = 1.9;
  NlmParams nlm;
  double beta = 0.95;
  friend bool operator==(const ViscosityOperatorConfig&, const ViscosityOperatorConfig&) = default;
};

struct MethodConfig {
  MethodType type = MethodType::vista;
  EquivariantMode mode = EquivariantMode::averaged;
  ViscosityConfig viscosity;
  ViscosityOperatorConfig op;
  friend bool operator==(const MethodConfig&, const MethodConfig&) = default;
};

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed parsing assumes 64-bit size_t");

struct ExperimentConfig {
  std::string name = "experiment";
  TaskConfig task;
  double noise_sigma = 0.0;  // required in files; no silent default
  std::uint64_t seed = 0;
  std::vector<std::string> images;
  AlgorithmConfig algorithm;
  DenoiserConfig denoiser;
  MethodConfig method;
  std::size_t iters = 500;
  std::size_t asymptotic_at = 500;
  double divergence_guard = 1e6;
  std::string output_dir = "out";
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<TaskType> {
  static constexpr std::pair<TaskType, const char*> table[] = {
      {TaskType::identity, "identity"},
      {TaskType::gaussian_deblur, "gaussian_deblur"},
      {TaskType::motion_deblur, "motion_deblur"},
      {TaskType::superres, "superres"}};
};
template <>
struct EnumNames<AlgorithmType> {
  static constexpr std::pair<AlgorithmType, const char*> table[] = {
      {AlgorithmType::pgd, "pgd"}, {AlgorithmType::hqs, "hqs"}, {AlgorithmType::admm, "admm"}};
};
template <>
struct EnumNames<DenoiserType> {
  static constexpr std::pair<DenoiserType, const char*> table[] = {
      {DenoiserType::identity, "identity"},
      {DenoiserType::gaussian, "gaussian"},
      {DenoiserType::scaled_identity, "scaled_identity"},
      {DenoiserType::unsharp, "unsharp"},
      {DenoiserType::nlm, "nlm"},
      {DenoiserType::dsg_nlm, "dsg_nlm"},
      {DenoiserType::bridge, "bridge"}};
};
template <>
struct EnumNames<MethodType> {
  static constexpr std::pair<MethodType, const char*> table[] = {
      {MethodType::vanilla, "vanilla"},
      {MethodType::equivariant, "equivariant"},
      {MethodType::vista, "vista"}};
};
template <>
struct EnumNames<ViscosityOperatorType> {
  static constexpr std::pair<ViscosityOperatorType, const char*> table[] = {
      {ViscosityOperatorType::nlm, "nlm"},
      {ViscosityOperatorType::scaled_identity, "scaled_identity"}};
};
template <>
struct EnumNames<Schedule> {
  static constexpr std::pair<Schedule, const char*> table[] = {
      {Schedule::adaptive, "adaptive"},
      {Schedule::constant, "constant"},
      {Schedule::reciprocal, "reciprocal"}};
};
template <>
struct EnumNames<EquivariantMode> {
  static constexpr std::pair<EquivariantMode, const char*> table[] = {
      {EquivariantMode::averaged, "averaged"}, {EquivariantMode::sampled, "sampled"}};
};

template <typename E>
std::string enum_name(E v) {
  for (const auto& [e, n] : EnumNames<E>::table)
    if (e == v) return n;
  return "?";
}

// Reads fields from one JSON object, tracking the dotted path for errors and
// rejecting keys the schema does not know.
class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.push_back(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    read(obj_.at(key), field(key), out);
  }
  template <typename T>
  void require(const std::string& key, T& out) {
    if (!has(key)) fail(field(key), "required field missing");
    read(obj_.at(key), field(key), out);
  }
  Reader child(const std::string& key) {
    static const Json empty = Json::object();
    return has(key) ? Reader(obj_.at(key), field(key)) : Reader(empty, field(key));
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) fail(field(key), "unknown field");
  }

 private:
  static void read(const Json& j, const std::string& f, double& out) {
    if (!j.is_number()) fail(f, "expected a number");
    out = j.get<double>();
    if (!std::isfinite(out)) fail(f, "must be finite");
  }
  static void read(const Json& j, const std::string& f, std::size_t& out) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
      fail(f, "expected a non-negative integer");
    out = j.get<std::size_t>();
  }
  static void read(const Json& j, const std::string& f, std::uint16_t& out) {
    if (!j.is_number_integer() || j.get<long long>() < 0 || j.get<long long>() > 65535)
      fail(f, "expected a port number");
    out = j.get<std::uint16_t>();
  }
  static void read(const Json& j, const std::string& f, std::optional<std::size_t>& out) {
    std::size_t v = 0;
    read(j, f, v);
    out = v;
  }
  static void read(const Json& j, const std::string& f, std::optional<double>& out) {
    double v = 0;
    read(j, f, v);
    out = v;
  }
  static void read(const Json& j, const std::string& f, std::string& out) {
    if (!j.is_string()) fail(f, "expected a string");
    out = j.get<std::string>();
  }
  static void read(const Json& j, const std::string& f, std::vector<std::string>& out) {
    if (!j.is_array()) fail(f, "expected an array of strings");
    out.clear();
    for (const auto& e : j) {
      if (!e.is_string()) fail(f, "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
  template <typename E>
    requires std::is_enum_v<E>
  static void read(const Json& j, const std::string& f, E& out) {
    if (!j.is_string()) fail(f, "expected a string");
    const std::string s = j.get<std::string>();
    for (const auto& [e, n] : EnumNames<E>::table)
      if (s == n) {
        out = e;
        return;
      }
    std::string allowed;
    for (const auto& [e, n] : EnumNames<E>::table) allowed += std::string(allowed.empty() ? "" : ", ") + n;
    fail(f, "unknown value '" + s + "' (expected one of: " + allowed + ")");
  }

  const Json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline Json nlm_to_json(const NlmParams& p) {
  return {{"window_radius", p.window_radius}, {"patch_radius", p.patch_radius}, {"h", p.h}};
}

inline void nlm_from(Reader& r, NlmParams& p) {
  r.get("window_radius", p.window_radius);
  r.get("patch_radius", p.patch_radius);
  r.get("h", p.h);
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  using detail::enum_name;
  Json kernel = {{"source", c.task.kernel.source}, {"path", c.task.kernel.path}};
  if (c.task.kernel.size) kernel["size"] = *c.task.kernel.size;
  if (c.task.kernel.sigma) kernel["sigma"] = *c.task.kernel.sigma;
  Json denoiser = {{"type", enum_name(c.denoiser.type)},
                   {"sigma", c.denoiser.sigma},
                   {"beta", c.denoiser.beta},
                   {"lambda", c.denoiser.lambda},
                   {"base_sigma", c.denoiser.base_sigma},
                   {"window_radius", c.denoiser.nlm.window_radius},
                   {"patch_radius", c.denoiser.nlm.patch_radius},
                   {"h", c.denoiser.nlm.h},
                   {"command", c.denoiser.command},
                   {"host", c.denoiser.host},
                   {"port", c.denoiser.port},
                   {"timeout_ms", c.denoiser.timeout_ms}};
  const ViscosityConfig& v = c.method.viscosity;
  Json viscosity = {{"type", enum_name(c.method.op.type)},
                    {"rho", c.method.op.rho},
                    {"beta", c.method.op.beta},
                    {"window_radius", c.method.op.nlm.window_radius},
                    {"patch_radius", c.method.op.nlm.patch_radius},
                    {"h", c.method.op.nlm.h}};
  Json method = {{"type", enum_name(c.method.type)},
                 {"mode", enum_name(c.method.mode)},
                 {"schedule", enum_name(v.schedule)},
                 {"theta_cap", v.theta_cap},
                 {"theta", v.theta},
                 {"neighborhood_eps", v.neighborhood_eps},
                 {"fixed_point_tol", v.fixed_point_tol},
                 {"fixed_point_max_iter", v.fixed_point_max_iter},
                 {"viscosity", viscosity}};
  return {{"name", c.name},
          {"task", {{"type", enum_name(c.task.type)}, {"factor", c.task.factor}, {"kernel", kernel}}},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"images", c.images},
          {"algorithm",
           {{"type", enum_name(c.algorithm.type)},
            {"gamma", c.algorithm.gamma},
            {"mu", c.algorithm.mu},
            {"alpha", c.algorithm.alpha},
            {"cg_tol", c.algorithm.cg.tol},
            {"cg_max_iter", c.algorithm.cg.max_iter}}},
          {"denoiser", denoiser},
          {"method", method},
          {"iters", c.iters},
          {"asymptotic_at", c.asymptotic_at},
          {"divergence_guard", c.divergence_guard},
          {"output_dir", c.output_dir}};
}

inline void validate(const ExperimentConfig& c) {
  auto fail = detail::Reader::fail;
  if (!(c.noise_sigma >= 0.0)) fail("noise_sigma", "must be >= 0");
  if (c.images.empty()) fail("images", "at least one ground-truth image is required");
  if (c.task.type == TaskType::superres && c.task.factor < 2) fail("task.factor", "must be >= 2");
  if (c.task.kernel.source != "builtin" && c.task.kernel.source != "file")
    fail("task.kernel.source", "must be 'builtin' or 'file'");
  if (c.task.kernel.source == "file" && c.task.kernel.path.empty())
    fail("task.kernel.path", "required when source is 'file'");
  if (c.task.type == TaskType::motion_deblur && c.task.kernel.source != "file")
    fail("task.kernel.source", "motion_deblur needs a kernel file");
  if (c.task.kernel.size && *c.task.kernel.size % 2 == 0) fail("task.kernel.size", "must be odd");
  if (c.task.kernel.sigma && !(*c.task.kernel.sigma > 0.0)) fail("task.kernel.sigma", "must be > 0");
  if (!(c.algorithm.gamma >= 0.0)) fail("algorithm.gamma", "must be >= 0");
  if (!(c.algorithm.mu > 0.0)) fail("algorithm.mu", "must be > 0");
  if (!(c.algorithm.alpha > 0.0)) fail("algorithm.alpha", "must be > 0");
  if (!(c.algorithm.cg.tol > 0.0)) fail("algorithm.cg_tol", "must be > 0");
  const DenoiserConfig& d = c.denoiser;
  if (d.type == DenoiserType::gaussian && !(d.sigma > 0.0)) fail("denoiser.sigma", "must be > 0");
  if (d.type == DenoiserType::scaled_identity && !(d.beta >= 0.0 && d.beta <= 1.0))
    fail("denoiser.beta", "must lie in [0, 1]");
  if (d.type == DenoiserType::unsharp && !(d.lambda > 1.0)) fail("denoiser.lambda", "must be > 1");
  if (d.type == DenoiserType::unsharp && !(d.base_sigma > 0.0)) fail("denoiser.base_sigma", "must be > 0");
  if ((d.type == DenoiserType::nlm || d.type == DenoiserType::dsg_nlm) && !(d.nlm.h > 0.0))
    fail("denoiser.h", "must be > 0");
  if (d.type == DenoiserType::bridge && d.command.empty() && (d.host.empty() || d.port == 0))
    fail("denoiser.command", "bridge needs a command or host and port");
  if (c.method.type == MethodType::vista) {
    try {
      c.method.viscosity.validate();
    } catch (const ConfigError& e) {
      fail("method", e.what());
    }
    const auto& op = c.method.op;
    if (op.type == ViscosityOperatorType::nlm && !(op.rho > 0.0 && op.rho < 2.0))
      fail("method.viscosity.rho", "must lie in (0, 2)");
    if (op.type == ViscosityOperatorType::nlm && !(op.nlm.h > 0.0)) fail("method.viscosity.h", "must be > 0");
    if (op.type == ViscosityOperatorType::scaled_identity && !(op.beta >= 0.0 && op.beta < 1.0))
      fail("method.viscosity.beta", "must lie in [0, 1) for a contraction");
  }
  if (!(c.divergence_guard > 0.0)) fail("divergence_guard", "must be > 0");
  if (c.output_dir.empty()) fail("output_dir", "must not be empty");
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  detail::Reader root(j, "");
  root.get("name", c.name);
  {
    auto task = root.child("task");
    task.get("type", c.task.type);
    task.get("factor", c.task.factor);
    auto kernel = task.child("kernel");
    kernel.get("source", c.task.kernel.source);
    kernel.get("size", c.task.kernel.size);
    kernel.get("sigma", c.task.kernel.sigma);
    kernel.get("path", c.task.kernel.path);
    kernel.finish();
    task.finish();
  }
  root.require("noise_sigma", c.noise_sigma);
  root.get("seed", c.seed);
  root.get("images", c.images);
  {
    auto a = root.child("algorithm");
    a.get("type", c.algorithm.type);
    a.get("gamma", c.algorithm.gamma);
    a.get("mu", c.algorithm.mu);
    a.get("alpha", c.algorithm.alpha);
    a.get("cg_tol", c.algorithm.cg.tol);
    a.get("cg_max_iter", c.algorithm.cg.max_iter);
    a.finish();
  }
  {
    auto d = root.child("denoiser");
    d.get("type", c.denoiser.type);
    d.get("sigma", c.denoiser.sigma);
    d.get("beta", c.denoiser.beta);
    d.get("lambda", c.denoiser.lambda);
    d.get("base_sigma", c.denoiser.base_sigma);
    detail::nlm_from(d, c.denoiser.nlm);
    d.get("command", c.denoiser.command);
    d.get("host", c.denoiser.host);
    d.get("port", c.denoiser.port);
    d.get("timeout_ms", c.denoiser.timeout_ms);
    d.finish();
  }
  {
    auto m = root.child("method");
    m.get("type", c.method.type);
    m.get("mode", c.method.mode);
    m.get("schedule", c.method.viscosity.schedule);
    m.get("theta_cap", c.method.viscosity.theta_cap);
    m.get("theta", c.method.viscosity.theta);
    m.get("neighborhood_eps", c.method.viscosity.neighborhood_eps);
    m.get("fixed_point_tol", c.method.viscosity.fixed_point_tol);
    m.get("fixed_point_max_iter", c.method.viscosity.fixed_point_max_iter);
    auto v = m.child("viscosity");
    v.get("type", c.method.op.type);
    v.get("rho", c.method.op.rho);
    v.get("beta", c.method.op.beta);
    detail::nlm_from(v, c.method.op.nlm);
    v.finish();
    m.finish();
  }
  root.get("iters", c.iters);
  root.get("asymptotic_at", c.asymptotic_at);
  root.get("divergence_guard", c.divergence_guard);
  root.get("output_dir", c.output_dir);
  root.finish();
  validate(c);
  return c;
}

// Sets a dotted field path ("algorithm.gamma") in a raw config. The value is
// parsed as JSON when possible (numbers, arrays, booleans), else kept as a
// string.
inline void apply_override(Json& j, const std::string& path, const std::string& value) {
  if (path.empty()) throw ConfigError("empty override path");
  Json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path + ": malformed override path");
    if (!node->is_object()) throw ConfigError(path + ": parent is not an object");
    if (dot == std::string::npos) {
      Json parsed = Json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
      return;
    }
    if (!node->contains(key)) (*node)[key] = Json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
  return j;
}

// Relative image and kernel paths resolve against base_dir.
inline void resolve_paths(ExperimentConfig& c, const std::filesystem::path& base_dir) {
  auto fix = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
  };
  for (auto& img : c.images) fix(img);
  fix(c.task.kernel.path);
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  Json j = read_json_file(path);
  for (const auto& [k, v] : overrides) apply_override(j, k, v);
  ExperimentConfig c = config_from_json(j);
  resolve_paths(c, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  for (const auto& img : c.images)
    if (!std::filesystem::exists(img)) throw ConfigError("images: file not found: " + img);
  if (c.task.kernel.source == "file" && !std::filesystem::exists(c.task.kernel.path))
    throw ConfigError("task.kernel.path: file not found: " + c.task.kernel.path);
  return c;
}

// FNV-1a 64 as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

// Identifies the reconstruction problem (task, noise, seed, data) independent
// of the method used to solve it.
inline std::string problem_hash(const ExperimentConfig& c) {
  const Json j = to_json(c);
  return fnv1a_hex(Json{{"task", j["task"]}, {"noise_sigma", j["noise_sigma"]}, {"seed", j["seed"]},
                        {"images", j["images"]}}
                       .dump());
}

// ---------------------------------------------------------------------------
// Problem synthesis

// Catmull-Rom (a = -0.5) cubic upsampling by an integer factor. Output pixel
// i samples input coordinate i / factor, matching phase-0 decimation; borders
// reflect symmetrically.
inline Image bicubic_upsample(const Image& x, std::size_t factor) {
  if (factor < 1) throw Error("bicubic_upsample: factor must be >= 1");
  auto cubic = [](double t) {
    t = std::abs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
  };
  auto reflect = [](long i, std::size_t n) {
    const long m = static_cast<long>(n);
    if (m == 1) return std::size_t{0};
    const long period = 2 * m;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < m ? i : period - 1 - i);
  };
  // Per-axis taps: 4 (index, weight) pairs per output coordinate.
  auto taps = [&](std::size_t n_in) {
    std::vector<std::pair<std::array<std::size_t, 4>, std::array<double, 4>>> t(n_in * factor);
    for (std::size_t o = 0; o < t.size(); ++o) {
      const double src = static_cast<double>(o) / static_cast<double>(factor);
      const long base = static_cast<long>(std::floor(src));
      const double frac = src - static_cast<double>(base);
      for (int q = 0; q < 4; ++q) {
        t[o].first[q] = reflect(base - 1 + q, n_in);
        t[o].second[q] = cubic(frac - static_cast<double>(q - 1));
      }
    }
    return t;
  };
  const auto ty = taps(x.height()), tx = taps(x.width());
  Image rows(Dims{x.height(), x.width() * factor, x.channels()});
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < x.height(); ++y)
      for (std::size_t o = 0; o < tx.size(); ++o) {
        double s = 0.0;
        for (int q = 0; q < 4; ++q) s += tx[o].second[q] * x.at(c, y, tx[o].first[q]);
        rows.at(c, y, o) = s;
      }
  Image out(Dims{x.height() * factor, x.width() * factor, x.channels()});
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t o = 0; o < ty.size(); ++o)
      for (std::size_t col = 0; col < out.width(); ++col) {
        double s = 0.0;
        for (int q = 0; q < 4; ++q) s += ty[o].second[q] * rows.at(c, ty[o].first[q], col);
        out.at(c, o, col) = s;
      }
  return out;
}

inline Kernel task_kernel(const TaskConfig& task) {
  if (task.kernel.source == "file") return load_kernel(task.kernel.path);
  if (task.type == TaskType::superres)
    return gaussian_kernel(task.kernel.size.value_or(9),
                           task.kernel.sigma.value_or(static_cast<double>(task.factor)));
  return gaussian_kernel(task.kernel.size.value_or(25), task.kernel.sigma.value_or(1.6));
}

struct BuiltProblem {
  Problem problem;
  Image x0;
};

// y = A x + noise; x0 = y for deblurring, bicubic upsample of y for
// superresolution.
inline BuiltProblem build_problem(const ExperimentConfig& cfg, const Image& ground_truth, Rng& rng) {
  validate(cfg);
  const Dims dims = ground_truth.dims();
  ForwardModel model = [&]() -> ForwardModel {
    switch (cfg.task.type) {
      case TaskType::identity:
        return ForwardModel::identity(dims);
      case TaskType::superres:
        if (dims.height % cfg.task.factor || dims.width % cfg.task.factor)
          throw ConfigError("task.factor: " + std::to_string(cfg.task.factor) +
                            " does not divide image dims " + dims.str());
        return ForwardModel::downsample(task_kernel(cfg.task), cfg.task.factor, dims);
      default:
        return ForwardModel::blur(task_kernel(cfg.task), dims);
    }
  }();
  Image y = add_gaussian_noise(model.apply(ground_truth), cfg.noise_sigma, rng);
  Image x0 = cfg.task.type == TaskType::superres ? bicubic_upsample(y, cfg.task.factor) : y;
  return BuiltProblem{Problem(std::move(model), std::move(y)), std::move(x0)};
}

inline Denoiser make_denoiser(const DenoiserConfig& d, const Image& guide) {
  switch (d.type) {
    case DenoiserType::identity: return identity_denoiser();
    case DenoiserType::gaussian: return gaussian_smoother(d.sigma);
    case DenoiserType::scaled_identity: return scaled_identity(d.beta);
    case DenoiserType::unsharp: return unsharp_expansive(d.lambda, d.base_sigma);
    case DenoiserType::nlm: return nlm_denoiser(d.nlm);
    case DenoiserType::dsg_nlm: return dsg_nlm_denoiser(build_dsg_weights(guide, d.nlm));
    case DenoiserType::bridge: {
      const auto timeout = std::chrono::milliseconds(d.timeout_ms);
      if (!d.command.empty()) return bridge_denoiser(SubprocessTransport{d.command}, timeout);
      return bridge_denoiser(TcpTransport{d.host, d.port}, timeout);
    }
  }
  throw ConfigError("denoiser.type: unsupported");
}

inline PnPOperator make_pnp_operator(const AlgorithmConfig& a, const Problem& problem, Denoiser d) {
  switch (a.type) {
    case AlgorithmType::pgd: return PnPOperator(Pgd{a.gamma}, problem, std::move(d), a.cg);
    case AlgorithmType::hqs: return PnPOperator(Hqs{a.mu}, problem, std::move(d), a.cg);
    case AlgorithmType::admm: return PnPOperator(Admm{a.alpha}, problem, std::move(d), a.cg);
  }
  throw ConfigError("algorithm.type: unsupported");
}

// ---------------------------------------------------------------------------
// Outputs

namespace detail {

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  if (std::isnan(*v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace detail

// Columns: k, psnr, theta, eta, beta, residual, near_p, diverged. Empty cells
// mark values that do not apply to a row.
inline std::string trace_csv(const IterationTrace& trace) {
  std::ostringstream os;
  os << "k,psnr,theta,eta,beta,residual,near_p,diverged\n";
  for (const TraceRow& r : trace.rows) {
    os << r.k << ',' << detail::csv_number(r.psnr) << ',' << detail::csv_number(r.theta) << ','
       << detail::csv_number(r.eta) << ',' << detail::csv_number(r.beta) << ','
       << detail::csv_number(r.residual) << ',' << (r.near_p ? 1 : 0) << ',' << (r.diverged ? 1 : 0)
       << '\n';
  }
  return os.str();
}

inline Json summary_json(const Summary& s, const IterationTrace& trace, const std::string& cfg_hash) {
  Json j = {{"peak_psnr", detail::json_number(s.peak_psnr)},
            {"peak_iter", s.peak_iter},
            {"asymptotic_psnr", detail::json_number(s.asymptotic_psnr)},
            {"asymptotic_iter", s.asymptotic_iter},
            {"asymptotic_truncated", s.asymptotic_truncated},
            {"diverged", s.diverged},
            {"bridge_failed", s.bridge_failed},
            {"wall_seconds", s.wall_seconds},
            {"config_hash", cfg_hash},
            {"method", trace.method},
            {"completed_iterations", trace.completed_iterations()}};
  if (trace.fixed_point_residual) j["fixed_point_residual"] = detail::json_number(*trace.fixed_point_residual);
  if (!trace.failure.empty()) j["failure"] = trace.failure;
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

struct ImageRun {
  std::string image;
  std::filesystem::path output_dir;
  IterationTrace trace;
  Summary summary;
};

struct RunReport {
  std::string config_hash;
  std::string problem_hash;
  std::vector<ImageRun> runs;
};

// Runs one ground-truth image; every file lands in out_dir.
inline ImageRun run_single(const ExperimentConfig& cfg, const std::string& image_path,
                           const std::filesystem::path& out_dir) {
  const Image truth = load_image(image_path);
  Rng rng(cfg.seed);
  BuiltProblem built = build_problem(cfg, truth, rng);

  Denoiser denoiser = make_denoiser(cfg.denoiser, built.x0);
  if (cfg.method.type == MethodType::equivariant)
    denoiser = equivariant_wrap(std::move(denoiser), cfg.method.mode, Rng(cfg.seed + 1));
  const PnPOperator t = make_pnp_operator(cfg.algorithm, built.problem, std::move(denoiser));

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::optional<Image> best;
  double best_psnr = -INFINITY;
  std::optional<Image> last;
  IterationOptions opts;
  opts.iters = cfg.iters;
  opts.ground_truth = truth;
  opts.divergence_guard = cfg.divergence_guard;
  opts.observer = [&](std::size_t, const Image& x) {
    const double q = psnr(truth, x);
    if (std::isfinite(q) && q > best_psnr) {
      best_psnr = q;
      best = x;
    }
    last = x;
  };

  IterationTrace trace = [&] {
    if (cfg.method.type != MethodType::vista) {
      return vanilla_iterate(t, built.x0, opts,
                             cfg.method.type == MethodType::vanilla ? "vanilla" : "equivariant");
    }
    ImageMap s;
    if (cfg.method.op.type == ViscosityOperatorType::nlm) {
      s = nlm_viscosity_operator(built.problem, built.x0, cfg.method.op.nlm, cfg.method.op.rho);
    } else {
      s = scaled_identity(cfg.method.op.beta);
    }
    const ViscosityConfig& vc = cfg.method.viscosity;
    const FixedPointResult fp = fixed_point(s, built.x0, vc.fixed_point_tol, vc.fixed_point_max_iter);
    save_image(out_dir / "fixed_point.png", fp.point);
    save_image(out_dir / "fixed_point.vimg", fp.point);
    IterationTrace tr = vista_iterate(t, s, built.x0, fp.point, vc, opts);
    tr.fixed_point_residual = fp.residual;
    return tr;
  }();

  const Summary summary = summarize(trace, cfg.asymptotic_at);
  write_text(out_dir / "trace.csv", trace_csv(trace));
  write_text(out_dir / "summary.json", summary_json(summary, trace, config_hash(cfg)).dump(2) + "\n");
  save_image(out_dir / "observation.png", built.problem.observation);
  save_image(out_dir / "initial.png", built.x0);
  if (best) {
    save_image(out_dir / "peak.png", *best);
    save_image(out_dir / "peak.vimg", *best);
  }
  if (last) {
    save_image(out_dir / "final.png", *last);
    save_image(out_dir / "final.vimg", *last);
  }
  return ImageRun{image_path, out_dir, std::move(trace), summary};
}

// One subdirectory per image when the config lists several.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  RunReport report{config_hash(cfg), problem_hash(cfg), {}};
  const std::filesystem::path root(cfg.output_dir);
  for (std::size_t i = 0; i < cfg.images.size(); ++i) {
    const std::filesystem::path dir =
        cfg.images.size() == 1
            ? root
            : root / (std::to_string(i) + "_" + std::filesystem::path(cfg.images[i]).stem().string());
    report.runs.push_back(run_single(cfg, cfg.images[i], dir));
  }
  return report;
}

struct CompareRow {
  std::string name;
  std::string method;
  std::string problem_hash;
  std::size_t images = 0;
  double peak_mean = 0.0, peak_std = 0.0;
  double asymptotic_mean = 0.0, asymptotic_std = 0.0;
  std::size_t diverged = 0;
};

// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline CompareRow compare_row(const ExperimentConfig& cfg, const RunReport& report) {
  CompareRow row;
  row.name = cfg.name;
  row.method = detail::enum_name(cfg.method.type);
  row.problem_hash = report.problem_hash;
  row.images = report.runs.size();
  std::vector<double> peaks, asym;
  for (const auto& r : report.runs) {
    peaks.push_back(r.summary.peak_psnr);
    asym.push_back(r.summary.asymptotic_psnr);
    row.diverged += r.summary.diverged ? 1 : 0;
  }
  std::tie(row.peak_mean, row.peak_std) = mean_std(peaks);
  std::tie(row.asymptotic_mean, row.asymptotic_std) = mean_std(asym);
  return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "name,method,problem_hash,images,peak_mean,peak_std,asymptotic_mean,asymptotic_std,diverged\n";
  for (const auto& r : rows)
    os << r.name << ',' << r.method << ',' << r.problem_hash << ',' << r.images << ','
       << detail::csv_number(r.peak_mean) << ',' << detail::csv_number(r.peak_std) << ','
       << detail::csv_number(r.asymptotic_mean) << ',' << detail::csv_number(r.asymptotic_std) << ','
       << r.diverged << '\n';
  return os.str();
}

inline std::string compare_text(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-12s %-16s %6s %18s %18s %8s\n", "name", "method", "problem",
                "images", "peak (dB)", "asymptotic (dB)", "diverged");
  os << line;
  for (const auto& r : rows) {
    char peak[40], asym[40];
    std::snprintf(peak, sizeof peak, "%.2f +/- %.2f", r.peak_mean, r.peak_std);
    std::snprintf(asym, sizeof asym, "%.2f +/- %.2f", r.asymptotic_mean, r.asymptotic_std);
    std::snprintf(line, sizeof line, "%-24s %-12s %-16s %6zu %18s %18s %8zu\n", r.name.c_str(),
                  r.method.c_str(), r.problem_hash.c_str(), r.images, peak, asym, r.diverged);
    os << line;
  }
  return os.str();
}

// Runs each config into out_dir/<index>_<name>/ and writes compare.csv and
// compare.txt to out_dir.
inline std::vector<CompareRow> compare(std::vector<ExperimentConfig> configs,
                                       const std::filesystem::path& out_dir) {
  if (configs.empty()) throw ConfigError("compare: at least one config is required");
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig& cfg = configs[i];
    cfg.output_dir = (out_dir / (std::to_string(i) + "_" + cfg.name)).string();
    rows.push_back(compare_row(cfg, run_experiment(cfg)));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());
  write_text(out_dir / "compare.csv", compare_csv(rows));
  write_text(out_dir / "compare.txt", compare_text(rows));
  return rows;
}

}  // namespace vista
