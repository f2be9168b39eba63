#include "common.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qfmqtt/errors.hpp"
#include "qfmqtt/version.hpp"

namespace qfmqtt::cli {

namespace {

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw InputError("not a number in quantile grid: '" + text + "'");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    parts.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return parts;
}

std::string scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw InputError("config values must be strings, numbers, booleans or arrays of these");
}

}  // namespace

std::vector<Quantile> parse_tau_grid(const std::string& text) {
  std::vector<double> values;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw InputError("quantile range must be start:stop:step");
    const double start = parse_number(parts[0]), stop = parse_number(parts[1]), step = parse_number(parts[2]);
    if (!(step > 0.0)) throw InputError("quantile range step must be positive");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    if (n < 0) throw InputError("quantile range is empty");
    for (long i = 0; i <= n; ++i) values.push_back(std::round((start + i * step) * 1e10) / 1e10);
  } else {
    for (const auto& p : split(text, ',')) values.push_back(parse_number(p));
  }
  if (values.empty()) throw InputError("empty quantile grid");
  std::vector<Quantile> grid;
  for (double v : values) {
    grid.emplace_back(v);
    if (grid.size() > 1 && !(grid[grid.size() - 2] < grid.back())) {
      throw InputError("quantile grid must be strictly increasing");
    }
  }
  return grid;
}

void apply_config(CLI::App& app, const Json& config) {
  if (!config.is_object()) throw InputError("config file must hold a JSON object");
  for (const auto& [key, value] : config.items()) {
    std::string name = key;
    CLI::Option* opt = app.get_option_no_throw("--" + name);
    if (opt == nullptr) {
      std::replace(name.begin(), name.end(), '_', '-');
      opt = app.get_option_no_throw("--" + name);
    }
    if (opt == nullptr || name == "config") throw InputError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> results;
    if (value.is_array()) {
      for (const auto& item : value) results.push_back(scalar_text(item));
      if (opt->get_items_expected_max() == 1) {
        std::string joined;
        for (const auto& r : results) joined += (joined.empty() ? "" : ",") + r;
        results = {joined};
      }
    } else {
      results.push_back(scalar_text(value));
    }
    try {
      opt->add_result(results);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InputError("config key '" + key + "': " + e.what());
    }
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InputError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw InputError("cannot create output directory " + dir.string());
  }
}

void Timings::start(const std::string& name) { open_[name] = std::chrono::steady_clock::now(); }

void Timings::stop(const std::string& name) {
  const auto it = open_.find(name);
  if (it == open_.end()) return;
  done_.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - it->second).count());
  open_.erase(it);
}

Json Timings::to_json() const {
  Json out = Json::object();
  for (const auto& [name, secs] : done_) out[name] = secs;
  return out;
}

Json make_manifest(const std::string& command, const std::vector<std::string>& args, const Json& config,
                   const Timings& timings, const std::vector<std::string>& outputs) {
  std::string compiler;
#if defined(__clang__)
  compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  compiler = "gcc " __VERSION__;
#endif
  Json argv = Json::array({"qfmqtt"});
  for (const auto& a : args) argv.push_back(a);
  return Json{{"tool", "qfmqtt"},
              {"command", command},
              {"argv", argv},
              {"config", config},
              {"seed", config.contains("seed") ? config["seed"] : Json(nullptr)},
              {"versions",
               Json{{"qfmqtt", kVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                                  "." + std::to_string(BOOST_VERSION % 100)},
                    {"compiler", compiler}}},
              {"timings_seconds", timings.to_json()},
              {"outputs", outputs}};
}

Json error_json(int code, const std::string& kind, const std::string& message) {
  return Json{{"error", Json{{"code", code}, {"kind", kind}, {"message", message}}}};
}

void report_error(const std::filesystem::path& out_dir, std::ostream& err, const Json& error) {
  err << error.dump() << '\n';
  if (out_dir.empty()) return;
  std::error_code ec;
  if (!std::filesystem::is_directory(out_dir, ec)) return;
  std::ofstream file(out_dir / "error.json");
  if (file) file << error.dump(2) << '\n';
}

void parse_args(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  }
}

}  // namespace qfmqtt::cli
