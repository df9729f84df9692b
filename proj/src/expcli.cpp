#include "dynalab/expcli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace dynalab {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
            c == '-' || c == '_')
               ? c
               : '-';
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Run directories are the immediate subdirectories holding a metrics.csv.
std::vector<fs::path> find_run_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "metrics.csv"))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

struct MetricsRow {
  std::int64_t step = 0;
  std::string eval_return, mean_q, pct_model_error, sec_per_step;
};

std::vector<MetricsRow> read_metrics(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::vector<MetricsRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    auto cells = split(line, ',');
    if (cells.size() != 10) continue;
    MetricsRow r;
    r.step = std::stoll(cells[0]);
    r.eval_return = cells[1];
    r.mean_q = cells[3];
    r.pct_model_error = cells[7];
    r.sec_per_step = cells[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentSpec parse_experiment_text(const std::string& text) {
  ExperimentSpec spec;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("experiment spec line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("experiment spec line " + std::to_string(lineno) +
                        ": empty key");
    if (key == "name") {
      spec.name = value;
    } else if (key.rfind("sweep.", 0) == 0) {
      std::string axis = key.substr(6);
      std::vector<std::string> values;
      for (const std::string& raw : split(value, ',')) {
        std::string v = trim(raw);
        if (v.empty())
          throw ConfigError("experiment spec line " + std::to_string(lineno) +
                            ": empty sweep value for '" + axis + "'");
        // Validate eagerly against a scratch config.
        RunConfig probe;
        set_run_config_field(probe, axis, v);
        values.push_back(std::move(v));
      }
      if (values.empty())
        throw ConfigError("experiment spec line " + std::to_string(lineno) +
                          ": sweep axis '" + axis + "' has no values");
      spec.sweeps[axis] = std::move(values);
    } else {
      set_run_config_field(spec.base, key, value);
    }
  }
  return spec;
}

ExperimentSpec parse_experiment_file(const fs::path& path) {
  return parse_experiment_text(slurp(path));
}

std::string render_experiment(const ExperimentSpec& spec) {
  std::string out = "name = " + spec.name + "\n";
  for (const auto& [k, v] : run_config_to_kv(spec.base))
    out += k + " = " + v + "\n";
  for (const auto& [axis, values] : spec.sweeps) {
    out += "sweep." + axis + " = ";
    for (std::size_t i = 0; i < values.size(); ++i)
      out += (i ? ", " : "") + values[i];
    out += "\n";
  }
  return out;
}

std::vector<ExpandedRun> expand_runs(const ExperimentSpec& spec) {
  std::vector<ExpandedRun> runs;
  runs.push_back({"base", spec.base});
  for (const auto& [axis, values] : spec.sweeps) {
    std::vector<ExpandedRun> next;
    for (const auto& r : runs) {
      for (const auto& v : values) {
        ExpandedRun e = r;
        e.name = (r.name == "base" ? "" : r.name + "_") + axis + "-" +
                 sanitize(v);
        set_run_config_field(e.config, axis, v);
        next.push_back(std::move(e));
      }
    }
    runs = std::move(next);
  }
  return runs;
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const fs::path& out_dir, int parallel) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "experiment.txt");
    out << render_experiment(spec);
  }
  std::vector<ExpandedRun> runs = expand_runs(spec);
  for (auto& r : runs) r.config.out_dir = (out_dir / r.name).string();

  ExperimentResult result;
  result.outcomes.resize(runs.size());
  std::atomic<std::size_t> next{0};
  const int workers =
      std::max(1, std::min<int>(parallel, static_cast<int>(runs.size())));
  auto work = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      RunOutcome& o = result.outcomes[i];
      o.name = runs[i].name;
      try {
        RunResult rr = train(runs[i].config);
        o.ok = true;
        o.ledger = rr.ledger;
      } catch (const std::exception& e) {
        o.ok = false;
        o.error = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::ofstream runs_csv(out_dir / "runs.csv");
  runs_csv << "run,status,final_return,error\n";
  for (const auto& o : result.outcomes) {
    std::string err = o.error;
    for (char& c : err)
      if (c == ',' || c == '\n') c = ';';
    runs_csv << o.name << "," << (o.ok ? "ok" : "failed") << ","
             << (o.ok ? g9(o.ledger.final_eval_return) : std::string()) << ","
             << err << "\n";
    if (o.ok)
      ++result.n_ok;
    else
      ++result.n_failed;
  }
  runs_csv.close();
  write_manifest(out_dir);
  return result;
}

namespace {

// Blank wall-clock content so that identical work hashes identically.
std::string masked_for_hash(const fs::path& file) {
  std::string bytes = slurp(file);
  const std::string name = file.filename().string();
  if (name == "metrics.csv") {
    std::string out;
    for (const std::string& line : split(bytes, '\n')) {
      auto cells = split(line, ',');
      if (cells.size() == 10) cells[8].clear();  // sec_per_env_step
      for (std::size_t i = 0; i < cells.size(); ++i)
        out += (i ? "," : "") + cells[i];
      out += "\n";
    }
    return out;
  }
  if (name == "ledger.txt" || name == "config.txt") {
    std::string out;
    for (std::string line : split(bytes, '\n')) {
      if (line.rfind("wall_seconds = ", 0) == 0) line = "wall_seconds =";
      if (line.rfind("out_dir = ", 0) == 0) line = "out_dir =";
      if (!line.empty()) out += line + "\n";
    }
    return out;
  }
  return bytes;
}

}  // namespace

void write_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.txt")
      files.push_back(e.path());
  std::sort(files.begin(), files.end(), [&](const fs::path& a,
                                            const fs::path& b) {
    return a.lexically_relative(dir).generic_string() <
           b.lexically_relative(dir).generic_string();
  });
  std::ofstream out(dir / "manifest.txt");
  for (const auto& f : files) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(masked_for_hash(f))));
    out << f.lexically_relative(dir).generic_string() << " " << buf << "\n";
  }
}

AggregateSummary aggregate(const fs::path& dir, const AggregateOptions& opts) {
  struct RunData {
    std::string env, algorithm, seed;
    std::vector<MetricsRow> rows;
  };
  std::vector<RunData> data;
  for (const fs::path& rd : find_run_dirs(dir)) {
    auto kv = read_kv(rd / "config.txt");
    RunData r;
    r.env = kv.at("env");
    r.algorithm = kv.at("algorithm");
    r.seed = kv.at("seed");
    r.rows = read_metrics(rd / "metrics.csv");
    data.push_back(std::move(r));
  }
  if (data.empty()) throw std::runtime_error("no runs under " + dir.string());

  // Resolve one normalizer per task.
  AggregateSummary summary;
  for (const auto& r : data) {
    if (summary.normalizer_by_env.count(r.env)) continue;
    double norm = 1.0;
    if (opts.normalizer == "per_task_max_mean") {
      double best = 0.0;
      bool seen = false;
      for (const auto& s : data) {
        if (s.env != r.env) continue;
        for (const auto& row : s.rows)
          if (!row.eval_return.empty()) {
            double v = std::stod(row.eval_return);
            if (!seen || v > best) best = v;
            seen = true;
          }
      }
      norm = (seen && best > 0.0) ? best : 1.0;
    } else if (opts.normalizer == "dmc_max_return") {
      auto [task, variant] = make_env(r.env);
      norm = static_cast<double>(variant.horizon) * 1.0;
    } else {
      try {
        norm = std::stod(opts.normalizer);
      } catch (const std::exception&) {
        throw ConfigError("unknown normalizer '" + opts.normalizer + "'");
      }
      if (norm <= 0.0) throw ConfigError("normalizer must be positive");
    }
    summary.normalizer_by_env[r.env] = norm;
  }

  fs::path agg = dir / "aggregate";
  fs::create_directories(agg);
  std::ofstream pr(agg / "plot_return.csv");
  std::ofstream pq(agg / "plot_mean_q.csv");
  std::ofstream pm(agg / "plot_model_error.csv");
  pr << "env,algorithm,seed,step,return,normalized_return\n";
  pq << "env,algorithm,seed,step,mean_q\n";
  pm << "env,algorithm,seed,step,pct_model_error\n";
  for (const auto& r : data) {
    const double norm = summary.normalizer_by_env.at(r.env);
    for (const auto& row : r.rows) {
      if (!row.eval_return.empty())
        pr << r.env << "," << r.algorithm << "," << r.seed << "," << row.step
           << "," << row.eval_return << ","
           << g9(std::stod(row.eval_return) / norm) << "\n";
      if (!row.mean_q.empty())
        pq << r.env << "," << r.algorithm << "," << r.seed << "," << row.step
           << "," << row.mean_q << "\n";
      if (!row.pct_model_error.empty())
        pm << r.env << "," << r.algorithm << "," << r.seed << "," << row.step
           << "," << row.pct_model_error << "\n";
    }
  }

  // Summary rows per (env, algorithm), sorted.
  std::map<std::pair<std::string, std::string>,
           std::pair<std::int64_t, double>>
      finals;
  for (const auto& r : data) {
    double last = 0.0;
    for (const auto& row : r.rows)
      if (!row.eval_return.empty()) last = std::stod(row.eval_return);
    auto& slot = finals[{r.env, r.algorithm}];
    slot.first += 1;
    slot.second += last;
  }
  std::ofstream ac(agg / "aggregate.csv");
  ac << "env,algorithm,runs,normalizer,final_return_mean,"
        "final_normalized_mean\n";
  for (const auto& [key, val] : finals) {
    const double norm = summary.normalizer_by_env.at(key.first);
    const double mean = val.second / static_cast<double>(val.first);
    ac << key.first << "," << key.second << "," << val.first << "," << g9(norm)
       << "," << g9(mean) << "," << g9(mean / norm) << "\n";
    summary.rows.push_back({key.first, key.second, val.first, mean,
                            mean / norm});
  }

  // One normalized learning-curve SVG per task; polylines per run, colored
  // by algorithm.
  std::map<std::string, std::string> palette = {
      {"sac", "#1f77b4"},
      {"mbpo", "#d62728"},
      {"mbpo_perfect_model", "#2ca02c"}};
  std::set<std::string> envs;
  for (const auto& r : data) envs.insert(r.env);
  for (const std::string& env : envs) {
    const double norm = summary.normalizer_by_env.at(env);
    double xmax = 1.0, ymin = 0.0, ymax = 1.0;
    for (const auto& r : data) {
      if (r.env != env) continue;
      for (const auto& row : r.rows)
        if (!row.eval_return.empty()) {
          xmax = std::max(xmax, static_cast<double>(row.step));
          const double y = std::stod(row.eval_return) / norm;
          ymin = std::min(ymin, y);
          ymax = std::max(ymax, y);
        }
    }
    const double W = 640, H = 400, L = 60, B = 40;
    auto px = [&](double step) { return L + (W - L - 20) * step / xmax; };
    auto py = [&](double y) {
      return (H - B) - (H - B - 20) * (y - ymin) / (ymax - ymin);
    };
    std::ofstream svg(agg / ("return_" + sanitize(env) + ".svg"));
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
        << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<line x1='" << L << "' y1='20' x2='" << L << "' y2='" << (H - B)
        << "' stroke='black'/>\n"
        << "<line x1='" << L << "' y1='" << (H - B) << "' x2='" << (W - 20)
        << "' y2='" << (H - B) << "' stroke='black'/>\n"
        << "<text x='" << (W / 2) << "' y='" << (H - 8)
        << "' text-anchor='middle' font-size='12'>env steps (max "
        << static_cast<std::int64_t>(xmax) << ")</text>\n"
        << "<text x='14' y='" << (H / 2)
        << "' font-size='12' transform='rotate(-90 14 " << (H / 2)
        << ")'>normalized return</text>\n"
        << "<text x='" << (W / 2)
        << "' y='14' text-anchor='middle' font-size='13'>" << env
        << "</text>\n";
    int legend_y = 30;
    std::set<std::string> in_legend;
    for (const auto& r : data) {
      if (r.env != env) continue;
      std::string color =
          palette.count(r.algorithm) ? palette[r.algorithm] : "#7f7f7f";
      std::string pts;
      for (const auto& row : r.rows)
        if (!row.eval_return.empty()) {
          pts += g9(px(static_cast<double>(row.step))) + "," +
                 g9(py(std::stod(row.eval_return) / norm)) + " ";
        }
      svg << "<polyline fill='none' stroke='" << color
          << "' stroke-width='1.2' points='" << pts << "'/>\n";
      if (in_legend.insert(r.algorithm).second) {
        svg << "<line x1='" << (W - 190) << "' y1='" << legend_y << "' x2='"
            << (W - 160) << "' y2='" << legend_y << "' stroke='" << color
            << "' stroke-width='2'/>\n<text x='" << (W - 152) << "' y='"
            << (legend_y + 4) << "' font-size='11'>" << r.algorithm
            << "</text>\n";
        legend_y += 16;
      }
    }
    svg << "</svg>\n";
  }
  return summary;
}

TimingReport timing_report(const fs::path& dir) {
  TimingReport report;
  std::map<std::string, std::pair<std::int64_t, double>> by_algo;
  for (const fs::path& rd : find_run_dirs(dir)) {
    auto kv = read_kv(rd / "config.txt");
    std::vector<double> samples;
    for (const auto& row : read_metrics(rd / "metrics.csv"))
      if (!row.sec_per_step.empty())
        samples.push_back(std::stod(row.sec_per_step));
    TimingRow t;
    t.run = rd.filename().string();
    t.algorithm = kv.count("algorithm") ? kv.at("algorithm") : "?";
    t.samples = static_cast<std::int64_t>(samples.size());
    if (!samples.empty()) {
      double sum = 0.0;
      for (double v : samples) sum += v;
      t.mean_sec = sum / static_cast<double>(samples.size());
      std::sort(samples.begin(), samples.end());
      const std::size_t idx = static_cast<std::size_t>(
          std::ceil(0.95 * static_cast<double>(samples.size()))) - 1;
      t.p95_sec = samples[std::min(idx, samples.size() - 1)];
      auto& slot = by_algo[t.algorithm];
      slot.first += 1;
      slot.second += t.mean_sec;
    }
    report.runs.push_back(std::move(t));
  }
  for (const auto& [algo, slot] : by_algo)
    report.mean_by_algorithm[algo] =
        slot.second / static_cast<double>(slot.first);

  std::ofstream out(dir / "timing.csv");
  out << "kind,run,algorithm,samples,mean_sec,p95_sec\n";
  for (const auto& t : report.runs)
    out << "run," << t.run << "," << t.algorithm << "," << t.samples << ","
        << (t.samples ? g9(t.mean_sec) : std::string()) << ","
        << (t.samples ? g9(t.p95_sec) : std::string()) << "\n";
  for (const auto& [algo, mean] : report.mean_by_algorithm)
    out << "algorithm,," << algo << ",," << g9(mean) << ",\n";
  return report;
}

}  // namespace dynalab
