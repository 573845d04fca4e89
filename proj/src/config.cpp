#include "qivc/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "qivc/error.hpp"
#include "qivc/fileio.hpp"
#include "qivc/format.hpp"

namespace qivc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F parse_one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_one(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define QIVC_STR(name) \
  {#name, {[](RunConfig& c, const std::string&, const std::string& v) { c.name = v; }, \
           [](const RunConfig& c) { return c.name; }}}
#define QIVC_SIZE(name) \
  {#name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_size(k, v); }, \
           [](const RunConfig& c) { return fmt_size(c.name); }}}
#define QIVC_REAL(name) \
  {#name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_real(k, v); }, \
           [](const RunConfig& c) { return fmt_real(c.name); }}}
#define QIVC_BOOL(name) \
  {#name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_bool(k, v); }, \
           [](const RunConfig& c) { return fmt_bool(c.name); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      QIVC_STR(manifest),
      QIVC_STR(data_dir),
      QIVC_STR(cache),
      QIVC_STR(out_dir),
      QIVC_STR(checkpoint),
      QIVC_SIZE(k),
      QIVC_REAL(p),
      QIVC_REAL(lambda),
      QIVC_REAL(prior_var),
      QIVC_BOOL(rescale_sqrt_n),
      {"filters",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.filters = parse_list<std::size_t>(k, v, parse_size);
        },
        [](const RunConfig& c) { return join(c.filters, fmt_size); }}},
      QIVC_SIZE(kernel_size),
      QIVC_BOOL(pool_between),
      QIVC_SIZE(dense_width),
      QIVC_STR(activation),
      QIVC_REAL(bn_momentum),
      QIVC_REAL(bn_eps),
      QIVC_REAL(lr),
      QIVC_SIZE(batch),
      QIVC_SIZE(epochs),
      QIVC_SIZE(patience),
      QIVC_SIZE(folds),
      QIVC_STR(fold),
      QIVC_REAL(val_fraction),
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      QIVC_STR(grouping),
      QIVC_SIZE(jobs),
      QIVC_STR(loss_weighting),
      QIVC_REAL(ema_decay),
      QIVC_STR(dice_mode),
      QIVC_STR(split),
      {"snr_list",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.snr_list = parse_list<double>(k, v, parse_real);
        },
        [](const RunConfig& c) { return join(c.snr_list, [](double x) { return fmt_real(x); }); }}},
      QIVC_SIZE(eval_batch),
      {"noise_shape",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.noise_shape = parse_list<std::size_t>(k, v, parse_size);
        },
        [](const RunConfig& c) { return join(c.noise_shape, fmt_size); }}},
      QIVC_SIZE(noise_trials),
      QIVC_SIZE(synth_count),
      QIVC_REAL(synth_abnormal_fraction),
      QIVC_REAL(synth_snr),
      QIVC_REAL(synth_rate),
  };
  return table;
}

#undef QIVC_STR
#undef QIVC_SIZE
#undef QIVC_REAL
#undef QIVC_BOOL

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text, RunConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    base.set(trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return base;
}

RunConfig RunConfig::load(const std::filesystem::path& path, RunConfig base) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse(text, std::move(base));
}

RunConfig RunConfig::parse(const std::string& text) { return parse(text, RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& path) { return load(path, RunConfig{}); }

pcg::FoldGrouping RunConfig::fold_grouping() const {
  if (grouping == "segment") return pcg::FoldGrouping::segment;
  if (grouping == "recording") return pcg::FoldGrouping::recording;
  throw ConfigError("grouping must be 'segment' or 'recording', got '" + grouping + "'");
}

std::vector<std::size_t> RunConfig::selected_folds() const {
  if (fold == "all") {
    std::vector<std::size_t> out(folds);
    for (std::size_t i = 0; i < folds; ++i) out[i] = i;
    return out;
  }
  const auto f = parse_size("fold", fold);
  if (f >= folds) throw ConfigError("fold " + fold + " out of range for folds = " + std::to_string(folds));
  return {f};
}

NetworkConfig RunConfig::network() const {
  NetworkConfig n;
  n.blocks.clear();
  for (auto f : filters) n.blocks.push_back({f, kernel_size});
  n.pool_between = pool_between;
  n.dense_width = dense_width;
  n.activation = parse_activation(activation);
  n.qire.k = k;
  n.qire.p = p;
  n.qire.rescale_sqrt_n = rescale_sqrt_n;
  n.kl_scale = lambda;
  n.prior_var = prior_var;
  n.bn.momentum = bn_momentum;
  n.bn.eps = bn_eps;
  n.seed = seed;
  return n;
}

TrainHyper RunConfig::hyper() const {
  TrainHyper h;
  h.lr = lr;
  h.batch = batch;
  h.epochs = epochs;
  h.patience = patience;
  h.lambda = lambda;
  if (loss_weighting == "dynamic") {
    h.dynamic_weighting = true;
  } else if (loss_weighting == "fixed") {
    h.dynamic_weighting = false;
  } else {
    throw ConfigError("loss_weighting must be 'dynamic' or 'fixed', got '" + loss_weighting + "'");
  }
  h.ema_decay = ema_decay;
  if (dice_mode == "all") {
    h.dice_mode = DiceMode::all_classes;
  } else if (dice_mode == "positive") {
    h.dice_mode = DiceMode::positive_column;
  } else {
    throw ConfigError("dice_mode must be 'all' or 'positive', got '" + dice_mode + "'");
  }
  h.eval_batch = eval_batch;
  return h;
}

void RunConfig::validate() const {
  auto net = network();
  net.validate();
  // A QiRE draw over the smallest kernel must admit a k-dim subspace.
  std::size_t cin = net.in_channels;
  for (auto f : filters) {
    net.qire.validate(kernel_size * cin * f);
    cin = f;
  }
  hyper().validate();
  fold_grouping();
  if (folds < 2) throw ConfigError("folds must be at least 2");
  selected_folds();
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0,1)");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (split != "test" && split != "val") throw ConfigError("split must be 'test' or 'val', got '" + split + "'");
  for (double s : snr_list)
    if (std::isnan(s)) throw ConfigError("snr_list holds NaN");
  if (noise_shape.empty()) throw ConfigError("noise_shape is empty");
  if (noise_trials == 0) throw ConfigError("noise_trials must be positive");
  if (!(synth_abnormal_fraction >= 0 && synth_abnormal_fraction <= 1))
    throw ConfigError("synth_abnormal_fraction must lie in [0,1]");
  if (!(synth_rate > 800)) throw ConfigError("synth_rate must exceed twice the 400 Hz band edge");
  if (out_dir.empty()) throw ConfigError("out_dir is empty");
}

}  // namespace qivc
