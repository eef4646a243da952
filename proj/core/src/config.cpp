#include "topointerp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "topointerp/error.hpp"

namespace topointerp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ',' || s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t j = i;
    while (i < s.size() && s[i] != ',' && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > j) out.push_back(s.substr(j, i - j));
  }
  return out;
}

[[noreturn]] void bad(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::BadConfig, "line " + std::to_string(line) + ": " + msg);
}

template <class T>
T parse_number(std::string_view s, std::size_t line, std::string_view key) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    bad(line, "bad value '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

bool parse_bool(std::string_view s, std::size_t line, std::string_view key) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  bad(line, "expected a boolean for " + std::string(key));
}

std::string real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  auto& t = cfg.train;
  std::vector<int> extents;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad(lineno, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (value.empty()) bad(lineno, "missing value for " + std::string(key));
    const auto items = split_list(value);
    auto one = [&]() {
      if (items.size() != 1) bad(lineno, std::string(key) + " takes one value");
      return items.front();
    };
    auto weights = [&](double LossWeights::*field) {
      if (items.empty() || items.size() > 2) bad(lineno, std::string(key) + " takes one or two values");
      t.phase1.*field = parse_number<double>(items[0], lineno, key);
      t.phase2.*field = parse_number<double>(items.back(), lineno, key);
    };
    if (key == "dims") {
      t.arch.dims = parse_number<int>(one(), lineno, key);
    } else if (key == "extents") {
      extents.clear();
      for (auto s : items) extents.push_back(parse_number<int>(s, lineno, key));
    } else if (key == "T") {
      t.arch.encoding_width = parse_number<int>(one(), lineno, key);
    } else if (key == "r0") {
      t.arch.base_resolution = parse_number<int>(one(), lineno, key);
    } else if (key == "channels") {
      t.arch.channels.clear();
      for (auto s : items) t.arch.channels.push_back(parse_number<int>(s, lineno, key));
    } else if (key == "hidden") {
      t.arch.hidden = parse_number<int>(one(), lineno, key);
    } else if (key == "dropout_p") {
      t.arch.dropout_p = parse_number<double>(one(), lineno, key);
    } else if (key == "lr") {
      if (items.empty() || items.size() > 2) bad(lineno, "lr takes one or two values");
      t.lr = parse_number<double>(items[0], lineno, key);
      t.lr_phase2.reset();
      if (items.size() == 2) t.lr_phase2 = parse_number<double>(items[1], lineno, key);
    } else if (key == "lr_schedule") {
      const auto v = one();
      if (v != "constant" && v != "cosine") bad(lineno, "lr_schedule is constant or cosine");
      t.lr_cosine = v == "cosine";
    } else if (key == "lr_floor") {
      t.lr_floor = parse_number<double>(one(), lineno, key);
    } else if (key == "weight_decay") {
      t.weight_decay = parse_number<double>(one(), lineno, key);
    } else if (key == "n1") {
      t.n1 = parse_number<int>(one(), lineno, key);
    } else if (key == "n2") {
      t.n2 = parse_number<int>(one(), lineno, key);
    } else if (key == "alpha") {
      weights(&LossWeights::alpha);
    } else if (key == "beta") {
      weights(&LossWeights::beta);
    } else if (key == "gamma") {
      weights(&LossWeights::gamma);
    } else if (key == "prune_ratio") {
      t.prune_ratio = parse_number<double>(one(), lineno, key);
    } else if (key == "seed") {
      t.seed = parse_number<std::uint64_t>(one(), lineno, key);
    } else if (key == "threads") {
      t.threads = parse_number<int>(one(), lineno, key);
    } else if (key == "mse_in_phase2") {
      t.mse_in_phase2 = parse_bool(one(), lineno, key);
    } else if (key == "prune_cv_targets") {
      t.prune_cv_targets = parse_bool(one(), lineno, key);
    } else {
      bad(lineno, "unknown key '" + std::string(key) + "'");
    }
  }
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  if (t.threads < 0) throw Error(ErrorCode::BadConfig, "threads must be >= 0");
  cfg.grid = t.arch.output_shape();
  if (!extents.empty()) {
    if (static_cast<int>(extents.size()) != t.arch.dims) {
      throw Error(ErrorCode::BadConfig, "extents need one value per dimension");
    }
    for (int a = 0; a < t.arch.dims; ++a) {
      if (extents[static_cast<std::size_t>(a)] != cfg.grid.extents[a]) {
        throw Error(ErrorCode::BadConfig, "extents must equal r0 * 2^(blocks) on every axis");
      }
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  const auto& t = config.train;
  std::ostringstream out;
  auto list = [&](const auto& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + std::to_string(values[i]);
    return s;
  };
  std::vector<int> extents(config.grid.extents.begin(), config.grid.extents.begin() + config.grid.dims);
  out << "dims = " << t.arch.dims << '\n'
      << "extents = " << list(extents) << '\n'
      << "T = " << t.arch.encoding_width << '\n'
      << "r0 = " << t.arch.base_resolution << '\n'
      << "channels = " << list(t.arch.channels) << '\n'
      << "hidden = " << t.arch.hidden << '\n'
      << "dropout_p = " << real(t.arch.dropout_p) << '\n'
      << "lr = " << real(t.lr) << (t.lr_phase2 ? ", " + real(*t.lr_phase2) : std::string()) << '\n'
      << "lr_schedule = " << (t.lr_cosine ? "cosine" : "constant") << '\n'
      << "lr_floor = " << real(t.lr_floor) << '\n'
      << "weight_decay = " << real(t.weight_decay) << '\n'
      << "n1 = " << t.n1 << '\n'
      << "n2 = " << t.n2 << '\n'
      << "alpha = " << real(t.phase1.alpha) << ", " << real(t.phase2.alpha) << '\n'
      << "beta = " << real(t.phase1.beta) << ", " << real(t.phase2.beta) << '\n'
      << "gamma = " << real(t.phase1.gamma) << ", " << real(t.phase2.gamma) << '\n'
      << "prune_ratio = " << real(t.prune_ratio) << '\n'
      << "seed = " << t.seed << '\n'
      << "threads = " << t.threads << '\n'
      << "mse_in_phase2 = " << (t.mse_in_phase2 ? "true" : "false") << '\n'
      << "prune_cv_targets = " << (t.prune_cv_targets ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace topointerp
