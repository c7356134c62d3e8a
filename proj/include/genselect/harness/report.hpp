#pragma once

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "genselect/errors.hpp"
#include "genselect/harness/metrics.hpp"
#include "genselect/judge_sim.hpp"

// Method x accuracy tables (overall plus one column per source), a budget
// summary, and optionally a simulator arity sweep.

namespace genselect::harness {

struct Cell {
  double mean = 0.0;
  // Sample standard deviation across runs; absent for a single run.
  std::optional<double> spread;
};

struct ReportTable {
  std::vector<std::string> sources;
  std::vector<std::string> methods;
  // cells[m][0] is overall, cells[m][1 + s] the per-source column.
  std::vector<std::vector<std::optional<Cell>>> cells;
  std::size_t runs = 0;
};

namespace detail {

inline Cell summarize(const std::vector<double>& xs) {
  Cell c;
  for (double x : xs) c.mean += x;
  c.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - c.mean) * (x - c.mean);
    c.spread = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return c;
}

inline std::string pct(const Cell& c) {
  std::string s = sim::fixed(100.0 * c.mean, 2);
  if (c.spread) s += " ± " + sim::fixed(100.0 * *c.spread, 2);
  return s;
}

}  // namespace detail

// Methods appear in first-run order; a method or source missing from some
// run is averaged over the runs that have it.
inline ReportTable build_table(const std::vector<Metrics>& runs) {
  if (runs.empty()) throw Error("report needs at least one run");
  ReportTable t;
  t.runs = runs.size();
  std::set<std::string> sources;
  for (const auto& r : runs) {
    for (const auto& m : r.methods) {
      if (std::find(t.methods.begin(), t.methods.end(), m.name) == t.methods.end()) {
        t.methods.push_back(m.name);
      }
      for (const auto& [s, _] : m.by_source) sources.insert(s);
    }
  }
  t.sources.assign(sources.begin(), sources.end());
  for (const auto& name : t.methods) {
    std::vector<std::optional<Cell>> row;
    auto column = [&](const std::optional<std::string>& source) -> std::optional<Cell> {
      std::vector<double> xs;
      for (const auto& r : runs) {
        for (const auto& m : r.methods) {
          if (m.name != name) continue;
          if (!source) {
            xs.push_back(m.overall.accuracy());
          } else if (auto it = m.by_source.find(*source); it != m.by_source.end()) {
            xs.push_back(it->second.accuracy());
          }
        }
      }
      if (xs.empty()) return std::nullopt;
      return detail::summarize(xs);
    };
    row.push_back(column(std::nullopt));
    for (const auto& s : t.sources) row.push_back(column(s));
    t.cells.push_back(std::move(row));
  }
  return t;
}

inline std::string source_label(const std::string& s) { return s.empty() ? "(none)" : s; }

inline std::string table_markdown(const ReportTable& t) {
  std::ostringstream out;
  out << "| Method | All (%)";
  for (const auto& s : t.sources) out << " | " << source_label(s) << " (%)";
  out << " |\n|---|---";
  for (std::size_t i = 0; i < t.sources.size(); ++i) out << "|---";
  out << "|\n";
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    out << "| " << t.methods[m];
    for (const auto& c : t.cells[m]) out << " | " << (c ? detail::pct(*c) : "-");
    out << " |\n";
  }
  return out.str();
}

inline std::string table_csv(const ReportTable& t) {
  std::ostringstream out;
  out << "method,column,mean,spread,runs\n";
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    for (std::size_t k = 0; k < t.cells[m].size(); ++k) {
      const auto& c = t.cells[m][k];
      if (!c) continue;
      out << t.methods[m] << ',' << (k == 0 ? std::string("all") : source_label(t.sources[k - 1]))
          << ',' << sim::fixed(c->mean, 6) << ',' << (c->spread ? sim::fixed(*c->spread, 6) : "")
          << ',' << t.runs << '\n';
    }
  }
  return out.str();
}

inline std::string ledger_markdown(const std::vector<Metrics>& runs) {
  std::ostringstream out;
  out << "| Run | Problems | Quarantined | Generation tokens | Summary tokens | Selection tokens "
         "| Calls |\n|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    std::string calls;
    for (const auto& [k, v] : r.ledger.calls) {
      if (!calls.empty()) calls += ", ";
      calls += k + "=" + std::to_string(v);
    }
    out << "| " << i << " | " << r.problems << " | " << r.quarantined.size() << " | "
        << r.ledger.generation_tokens << " | " << r.ledger.summary_tokens << " | "
        << r.ledger.selection_tokens << " | " << (calls.empty() ? "-" : calls) << " |\n";
  }
  return out.str();
}

struct ReportFiles {
  std::filesystem::path markdown;
  std::filesystem::path csv;
  std::optional<std::filesystem::path> simulation_csv;
};

// Writes report.md and report.csv (plus simulation.csv when a sweep is
// given) into `dir`.
inline ReportFiles emit_report(const std::vector<Metrics>& runs, const std::filesystem::path& dir,
                               const std::optional<sim::SimResult>& sweep = std::nullopt) {
  ReportFiles files{dir / "report.md", dir / "report.csv", std::nullopt};
  std::ostringstream md;
  if (!runs.empty()) {
    const auto table = build_table(runs);
    md << "## Accuracy\n\n";
    if (runs.size() > 1) md << "Mean ± standard deviation over " << runs.size() << " runs.\n\n";
    md << table_markdown(table) << "\n## Budget\n\n" << ledger_markdown(runs);
    write_text(files.csv, table_csv(table));
  } else {
    write_text(files.csv, "method,column,mean,spread,runs\n");
  }
  if (sweep) {
    md << (runs.empty() ? "" : "\n") << "## Arity sweep\n\n" << sim::to_markdown(*sweep);
    files.simulation_csv = dir / "simulation.csv";
    write_text(*files.simulation_csv, sim::to_csv(*sweep));
  }
  write_text(files.markdown, md.str());
  return files;
}

}  // namespace genselect::harness
