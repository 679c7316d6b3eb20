#pragma once

// File formats: wide observations CSV, hidden-truth CSV, per-tick JSONL
// diagnostics and the key=value config. Readers report the 1-based line
// number of the first problem through ParseError.

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "moef/engine.hpp"
#include "moef/simulator.hpp"
#include "moef/types.hpp"

namespace moef::io {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Shortest decimal string that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------------------
// Generic CSV table
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

// Comma-separated, LF line endings, no quoting. Lines starting with '#'
// before the header are skipped. Every row must have the header's width.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool saw_blank = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find('\r') != std::string::npos) throw ParseError(lineno, "CR characters are not allowed (use LF line endings)");
    if (!have_header && !line.empty() && line.front() == '#') continue;
    if (line.empty()) {
      saw_blank = true;
      continue;
    }
    if (saw_blank) throw ParseError(lineno, "blank line inside the table");
    auto cells = split(line, ',');
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError(lineno, "expected " + std::to_string(table.header.size()) + " columns, found " +
                                   std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header) throw ParseError(lineno == 0 ? 1 : lineno, "missing header");
  return table;
}

// ---------------------------------------------------------------------------
// Observations: t,y,expert_0,...,expert_{N-1}
// ---------------------------------------------------------------------------

inline void write_observations(std::ostream& out, const std::vector<ObservationRecord>& obs, std::size_t n_experts) {
  out << "t,y";
  for (std::size_t i = 0; i < n_experts; ++i) out << ",expert_" << i;
  out << '\n';
  for (const auto& r : obs) {
    if (r.predictions.size() != n_experts) throw DomainError("write_observations: ragged predictions");
    out << r.t << ',' << format_double(r.y);
    for (double f : r.predictions) out << ',' << format_double(f);
    out << '\n';
  }
}

inline std::vector<ObservationRecord> read_observations(std::istream& in) {
  const CsvTable table = read_csv(in);
  const auto& h = table.header;
  if (h.size() < 3 || h[0] != "t" || h[1] != "y") throw ParseError(1, "header must be t,y,expert_0,...");
  for (std::size_t i = 2; i < h.size(); ++i)
    if (h[i] != "expert_" + std::to_string(i - 2))
      throw ParseError(1, "column " + std::to_string(i) + " must be named expert_" + std::to_string(i - 2));

  std::vector<ObservationRecord> obs;
  obs.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t lineno = table.line_numbers[r];
    ObservationRecord rec;
    const auto t = parse_int(cells[0]);
    if (!t) throw ParseError(lineno, "t must be an integer, got '" + cells[0] + "'");
    if (!obs.empty() && *t <= obs.back().t) throw ParseError(lineno, "t must be strictly increasing");
    rec.t = *t;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v) throw ParseError(lineno, "column " + h[c] + ": not a finite decimal number: '" + cells[c] + "'");
      if (c == 1)
        rec.y = *v;
      else
        rec.predictions.push_back(*v);
    }
    obs.push_back(std::move(rec));
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Hidden truth: t,active_expert
// ---------------------------------------------------------------------------

inline void write_truth(std::ostream& out, const std::vector<ObservationRecord>& obs,
                        const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  out << "# generator=" << Rng::kId << " seed=" << seed << '\n';
  out << "t,active_expert\n";
  for (std::size_t k = 0; k < hidden.size(); ++k) out << obs[k].t << ',' << hidden[k] << '\n';
}

struct TruthRow {
  std::int64_t t;
  std::size_t active_expert;
};

inline std::vector<TruthRow> read_truth(std::istream& in) {
  const CsvTable table = read_csv(in);
  if (table.header != std::vector<std::string>{"t", "active_expert"})
    throw ParseError(1, "header must be t,active_expert");
  std::vector<TruthRow> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto t = parse_int(table.rows[r][0]);
    const auto k = parse_int(table.rows[r][1]);
    if (!t || !k || *k < 0) throw ParseError(table.line_numbers[r], "expected integer t and nonnegative index");
    out.push_back({*t, static_cast<std::size_t>(*k)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics JSONL
// ---------------------------------------------------------------------------

using Json = nlohmann::ordered_json;

inline Json to_json(const TickOutput& o) {
  Json j;
  j["t"] = o.t;
  j["y"] = o.y;
  j["fused"] = o.fused;
  j["estimates"] = o.estimates;
  j["pi_bar"] = std::vector<double>(o.pi_bar.begin(), o.pi_bar.end());
  j["scores"] = o.scores;
  j["q"] = o.q_next.matrix().row_major();
  j["floor_events"] = o.floor_events;
  j["expert_weights"] = o.expert_weights;
  return j;
}

inline void write_diagnostics_line(std::ostream& out, const TickOutput& o) { out << to_json(o).dump() << '\n'; }

inline void write_diagnostics(std::ostream& out, const std::vector<TickOutput>& ticks) {
  for (const auto& o : ticks) write_diagnostics_line(out, o);
}

inline std::vector<TickOutput> read_diagnostics(std::istream& in) {
  std::vector<TickOutput> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      TickOutput o;
      o.t = j.at("t").get<std::int64_t>();
      o.y = j.at("y").get<double>();
      o.fused = j.at("fused").get<double>();
      o.estimates = j.at("estimates").get<std::vector<double>>();
      o.pi_bar = SimplexVector(j.at("pi_bar").get<std::vector<double>>());
      o.scores = j.at("scores").get<std::vector<double>>();
      const auto q = j.at("q").get<std::vector<double>>();
      const std::size_t n = o.estimates.size();
      if (q.size() != n * n) throw ParseError(lineno, "q must have N*N entries");
      o.q_next = IntensityMatrix::unchecked(Matrix::from_row_major(n, n, q));
      o.floor_events = j.at("floor_events").get<std::int64_t>();
      if (j.contains("expert_weights")) o.expert_weights = j["expert_weights"].get<std::vector<double>>();
      out.push_back(std::move(o));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// key = value config
// ---------------------------------------------------------------------------

struct ConfigFile {
  FusionConfig fusion;
  std::set<std::string> fusion_keys;  // fusion keys present in the file
  std::optional<Scenario> scenario;   // present iff any scenario.* key is set
};

namespace detail {

inline std::vector<double> parse_numbers(const std::string& text, std::size_t lineno, const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto v = parse_double(tok);
    if (!v) throw ParseError(lineno, key + ": not a number: '" + tok + "'");
    out.push_back(*v);
  }
  return out;
}

inline double parse_one(const std::string& value, std::size_t lineno, const std::string& key) {
  const auto v = parse_double(value);
  if (!v) throw ParseError(lineno, key + ": expected a finite number, got '" + value + "'");
  return *v;
}

inline ExpertSpec parse_expert(const std::string& value, std::size_t lineno, const std::string& key) {
  std::istringstream ss(value);
  std::string kind;
  ss >> kind;
  std::string rest;
  std::getline(ss, rest);
  const auto nums = parse_numbers(rest, lineno, key);
  if (kind == "constant" && nums.size() == 1) return expert::Constant{nums[0]};
  if (kind == "sinusoid" && nums.size() == 3) return expert::Sinusoid{nums[0], nums[1], nums[2]};
  if (kind == "lag" && nums.size() == 1 && nums[0] == std::floor(nums[0]))
    return expert::LagOfTarget{static_cast<std::int64_t>(nums[0])};
  throw ParseError(lineno, key + ": expected 'constant C', 'sinusoid AMP PERIOD PHASE' or 'lag K'");
}

}  // namespace detail

inline ConfigFile read_config(std::istream& in) {
  ConfigFile cfg;
  std::map<std::size_t, ExpertSpec> experts;
  std::optional<Matrix> q_true;
  std::size_t q_line = 0;
  Scenario sc;
  bool any_scenario = false;
  std::optional<double> noise_alpha, noise_delta;
  std::set<std::string> seen;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find('\r') != std::string::npos) throw ParseError(lineno, "CR characters are not allowed");
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError(lineno, "duplicate key '" + key + "'");

    auto& f = cfg.fusion;
    if (key == "loss") {
      if (value == "mse") f.loss = Loss::MSE;
      else if (value == "bce") f.loss = Loss::BCE;
      else throw ParseError(lineno, "loss must be bce or mse");
    } else if (key == "q_diag") {
      if (value == "row") f.q_diag = QDiagonal::Row;
      else if (value == "column") f.q_diag = QDiagonal::Column;
      else throw ParseError(lineno, "q_diag must be row or column");
    } else if (key == "lambda") { f.lambda = detail::parse_one(value, lineno, key);
    } else if (key == "alpha") { f.alpha = detail::parse_one(value, lineno, key);
    } else if (key == "delta") { f.delta = detail::parse_one(value, lineno, key);
    } else if (key == "eps_f") { f.eps_f = detail::parse_one(value, lineno, key);
    } else if (key == "eps_b") { f.eps_B = detail::parse_one(value, lineno, key);
    } else if (key == "eps_pi") { f.eps_pi = detail::parse_one(value, lineno, key);
    } else if (key == "dt") { f.dt = detail::parse_one(value, lineno, key);
    } else if (key.rfind("scenario.", 0) == 0) {
      any_scenario = true;
      const std::string sk = key.substr(9);
      if (sk == "q_true") {
        std::vector<std::vector<double>> rows;
        for (const auto& r : split(value, ';')) rows.push_back(detail::parse_numbers(r, lineno, key));
        std::vector<double> flat;
        for (const auto& r : rows) {
          if (r.size() != rows.size()) throw ParseError(lineno, "scenario.q_true must be square");
          flat.insert(flat.end(), r.begin(), r.end());
        }
        q_true = Matrix::from_row_major(rows.size(), rows.size(), std::move(flat));
        q_line = lineno;
      } else if (sk.rfind("expert.", 0) == 0) {
        const auto idx = parse_int(sk.substr(7));
        if (!idx || *idx < 0) throw ParseError(lineno, "expert index must be a nonnegative integer");
        experts[static_cast<std::size_t>(*idx)] = detail::parse_expert(value, lineno, key);
      } else if (sk == "noise_c") { sc.noise.c = detail::parse_one(value, lineno, key);
      } else if (sk == "noise_alpha") { noise_alpha = detail::parse_one(value, lineno, key);
      } else if (sk == "noise_delta") { noise_delta = detail::parse_one(value, lineno, key);
      } else if (sk == "dt") { sc.dt = detail::parse_one(value, lineno, key);
      } else if (sk == "y0") { sc.y0 = detail::parse_one(value, lineno, key);
      } else if (sk == "t_max") {
        const auto v = parse_int(value);
        if (!v) throw ParseError(lineno, key + ": expected an integer");
        sc.t_max = *v;
      } else if (sk == "seed") {
        const auto v = parse_u64(value);
        if (!v) throw ParseError(lineno, key + ": expected an unsigned 64-bit integer");
        sc.seed = *v;
      } else if (sk == "initial_state") {
        const auto v = parse_int(value);
        if (!v || *v < 0) throw ParseError(lineno, key + ": expected a nonnegative integer");
        sc.initial_state = static_cast<std::size_t>(*v);
      } else if (sk == "observe") {
        if (value == "level") sc.observe = Observe::Level;
        else if (value == "rate") sc.observe = Observe::Rate;
        else throw ParseError(lineno, "scenario.observe must be level or rate");
      } else {
        throw ParseError(lineno, "unknown key '" + key + "'");
      }
      continue;
    } else {
      throw ParseError(lineno, "unknown key '" + key + "'");
    }
    cfg.fusion_keys.insert(key);
  }

  if (any_scenario) {
    if (noise_alpha && noise_delta)
      throw ParseError(lineno, "give scenario.noise_alpha or scenario.noise_delta, not both");
    try {
      if (noise_alpha) sc.noise.alpha_decay = *noise_alpha;
      if (noise_delta) sc.noise.alpha_decay = alpha_from_delta(*noise_delta);
    } catch (const DomainError& e) {
      throw ParseError(lineno, e.what());
    }
    std::size_t expect = 0;
    for (const auto& [i, spec] : experts) {
      if (i != expect) throw ParseError(lineno, "scenario experts must be numbered 0..N-1 without gaps");
      sc.experts.push_back(spec);
      ++expect;
    }
    if (!q_true) throw ParseError(lineno, "scenario.q_true is required");
    if (!validate_intensity(*q_true))
      throw ParseError(q_line, "scenario.q_true is not a valid intensity matrix (off-diagonals >= 0, rows sum to 0)");
    sc.q_true = IntensityMatrix(*q_true);
    cfg.scenario = std::move(sc);
  }
  return cfg;
}

}  // namespace moef::io
