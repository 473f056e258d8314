// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>

namespace mdl::bench {

namespace {

// Row order follows the published comparison tables.
const char* kStrategyOrder[] = {"top_specific", "random", "bottom_specific"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<std::string> ordered_unique(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const std::string& s : in)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

struct CellStats {
  double acc_sum = 0.0;
  double params_sum = 0.0;
  int count = 0;
  double acc() const { return acc_sum / count; }
  double params_m() const { return params_sum / count / 1e6; }
};

bool is_independent(const ResultRow& row) {
  return row.strategy == "independent" || row.fraction == 1.0;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out;
}

}  // namespace

std::string render_strategy_table(const ResultsTable& table) {
  std::vector<std::string> arch_order, domain_order;
  for (const ResultRow& row : table.rows) {
    arch_order.push_back(row.architecture);
    domain_order.push_back(row.domain_id);
  }
  arch_order = ordered_unique(arch_order);
  domain_order = ordered_unique(domain_order);

  std::string out = "architecture,num_domains,fraction,strategy,params_m";
  for (const std::string& d : domain_order) out += ",acc_" + d;
  for (const std::string& d : domain_order) out += ",best_" + d;
  out += "\n";

  for (const std::string& arch : arch_order) {
    std::set<int> counts;
    for (const ResultRow& row : table.rows)
      if (row.architecture == arch) counts.insert(row.num_domains);

    for (int count : counts) {
      std::set<double> fraction_set;
      for (const ResultRow& row : table.rows) {
        if (row.architecture == arch && row.num_domains == count &&
            row.strategy != "independent")
          fraction_set.insert(row.fraction);
      }

      for (double fraction : fraction_set) {
        // strategy -> domain -> aggregated accuracy (mean over seeds)
        std::map<std::string, std::map<std::string, CellStats>> stats;
        for (const ResultRow& row : table.rows) {
          if (row.architecture != arch || row.num_domains != count ||
              row.fraction != fraction || row.strategy == "independent")
            continue;
          auto& s = stats[row.strategy][row.domain_id];
          s.acc_sum += row.val_accuracy;
          s.params_sum += static_cast<double>(row.params_total);
          ++s.count;
        }

        std::map<std::string, std::string> best_domain;  // domain -> strategy set marker
        std::map<std::string, double> best_value;
        for (const auto& [strategy, per_domain] : stats) {
          for (const auto& [domain, cell] : per_domain) {
            auto it = best_value.find(domain);
            if (it == best_value.end() || cell.acc() > it->second)
              best_value[domain] = cell.acc();
          }
        }

        for (const char* strategy : kStrategyOrder) {
          auto it = stats.find(strategy);
          if (it == stats.end()) continue;
          double params_sum = 0.0;
          int params_count = 0;
          for (const auto& [domain, cell] : it->second) {
            params_sum += cell.params_sum;
            params_count += cell.count;
          }
          out += arch + ',' + std::to_string(count) + ',' +
                 format_double(fraction) + ',' + strategy + ',' +
                 fmt("%.2f", params_sum / params_count / 1e6);
          for (const std::string& d : domain_order) {
            auto dit = it->second.find(d);
            out += ',';
            if (dit != it->second.end()) out += fmt("%.4f", dit->second.acc());
          }
          for (const std::string& d : domain_order) {
            auto dit = it->second.find(d);
            const bool best =
                dit != it->second.end() &&
                std::abs(dit->second.acc() - best_value[d]) < 1e-12;
            out += best ? ",1" : ",0";
          }
          out += '\n';
        }
      }

      // One independent reference row per (architecture, domain count),
      // sourced from fraction-1.0 cells or explicit "independent" rows.
      std::map<std::string, CellStats> indep;
      for (const ResultRow& row : table.rows) {
        if (row.architecture != arch || row.num_domains != count ||
            !is_independent(row))
          continue;
        auto& s = indep[row.domain_id];
        s.acc_sum += row.val_accuracy;
        s.params_sum += static_cast<double>(row.params_total);
        ++s.count;
      }
      if (!indep.empty()) {
        double params_sum = 0.0;
        int params_count = 0;
        for (const auto& [domain, cell] : indep) {
          params_sum += cell.params_sum;
          params_count += cell.count;
        }
        out += arch + ',' + std::to_string(count) + ",1,independent," +
               fmt("%.2f", params_sum / params_count / 1e6);
        for (const std::string& d : domain_order) {
          auto dit = indep.find(d);
          out += ',';
          if (dit != indep.end()) out += fmt("%.4f", dit->second.acc());
        }
        for (std::size_t i = 0; i < domain_order.size(); ++i) out += ",0";
        out += '\n';
      }
    }
  }
  return out;
}

std::vector<DirectionalRow> directional_gaps(const ResultsTable& table) {
  // (arch, fraction) -> domain -> strategy -> mean accuracy
  std::map<std::pair<std::string, double>,
           std::map<std::string, std::map<std::string, CellStats>>>
      groups;
  for (const ResultRow& row : table.rows) {
    if (row.strategy != "bottom_specific" && row.strategy != "top_specific")
      continue;
    auto& s = groups[{row.architecture, row.fraction}][row.domain_id]
                    [row.strategy];
    s.acc_sum += row.val_accuracy;
    ++s.count;
  }
  std::vector<DirectionalRow> out;
  for (const auto& [key, domains] : groups) {
    double gap_sum = 0.0;
    int gap_count = 0;
    for (const auto& [domain, strategies] : domains) {
      auto bottom = strategies.find("bottom_specific");
      auto top = strategies.find("top_specific");
      if (bottom == strategies.end() || top == strategies.end()) continue;
      gap_sum += bottom->second.acc() - top->second.acc();
      ++gap_count;
    }
    if (gap_count > 0)
      out.push_back({key.first, key.second, gap_sum / gap_count});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.architecture, a.fraction) <
           std::tie(b.architecture, b.fraction);
  });
  return out;
}

std::string render_directional(const std::vector<DirectionalRow>& rows) {
  std::string out = "architecture,fraction,mean_gap_bottom_minus_top\n";
  for (const DirectionalRow& row : rows) {
    out += row.architecture + ',' + format_double(row.fraction) + ',' +
           fmt("%.4f", row.mean_gap) + '\n';
  }
  return out;
}

namespace {

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (fraction, accuracy)
};

constexpr double kWidth = 540, kHeight = 400;
constexpr double kLeft = 64, kRight = 20, kTop = 40, kBottom = 56;

double sx(double fraction) {
  return kLeft + fraction * (kWidth - kLeft - kRight);
}
double sy(double accuracy) {
  return kHeight - kBottom - accuracy * (kHeight - kTop - kBottom);
}

}  // namespace

std::string render_curve_svg(const ResultsTable& table,
                             const std::string& architecture,
                             const std::string& domain_id) {
  const std::pair<const char*, const char*> styles[] = {
      {"top_specific", "#2ca02c"},
      {"random", "#1f77b4"},
      {"bottom_specific", "#d62728"}};

  std::vector<Series> series;
  for (auto [strategy, color] : styles) {
    std::map<double, CellStats> per_fraction;
    for (const ResultRow& row : table.rows) {
      if (row.architecture != architecture || row.domain_id != domain_id ||
          row.strategy != strategy)
        continue;
      auto& s = per_fraction[row.fraction];
      s.acc_sum += row.val_accuracy;
      ++s.count;
    }
    if (per_fraction.empty()) continue;
    Series line{strategy, color, {}};
    for (const auto& [fraction, cell] : per_fraction)
      line.points.emplace_back(fraction, cell.acc());
    series.push_back(std::move(line));
  }

  std::optional<double> independent;
  {
    CellStats s;
    for (const ResultRow& row : table.rows) {
      if (row.architecture != architecture || row.domain_id != domain_id ||
          !is_independent(row))
        continue;
      s.acc_sum += row.val_accuracy;
      ++s.count;
    }
    if (s.count > 0) independent = s.acc();
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         fmt("%.0f", kWidth) + "\" height=\"" + fmt("%.0f", kHeight) +
         "\" viewBox=\"0 0 " + fmt("%.0f", kWidth) + " " +
         fmt("%.0f", kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.0f", kWidth / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" +
         architecture + " / " + domain_id + "</text>\n";

  // Axes and gridlines at 0.2 intervals on both scales.
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg += "<line x1=\"" + fmt("%.1f", sx(0)) + "\" y1=\"" +
           fmt("%.1f", sy(v)) + "\" x2=\"" + fmt("%.1f", sx(1)) + "\" y2=\"" +
           fmt("%.1f", sy(v)) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", sx(0) - 8) + "\" y=\"" +
           fmt("%.1f", sy(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           fmt("%.1f", v) + "</text>\n";
    svg += "<text x=\"" + fmt("%.1f", sx(v)) + "\" y=\"" +
           fmt("%.1f", sy(0) + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           fmt("%.1f", v) + "</text>\n";
  }
  svg += "<line x1=\"" + fmt("%.1f", sx(0)) + "\" y1=\"" + fmt("%.1f", sy(0)) +
         "\" x2=\"" + fmt("%.1f", sx(1)) + "\" y2=\"" + fmt("%.1f", sy(0)) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt("%.1f", sx(0)) + "\" y1=\"" + fmt("%.1f", sy(0)) +
         "\" x2=\"" + fmt("%.1f", sx(0)) + "\" y2=\"" + fmt("%.1f", sy(1)) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt("%.0f", kWidth / 2) + "\" y=\"" +
         fmt("%.0f", kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">domain-specific fraction</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt("%.0f", kHeight / 2) +
         "\" transform=\"rotate(-90 16 " + fmt("%.0f", kHeight / 2) +
         ")\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">validation accuracy</text>\n";

  if (independent) {
    svg += "<line x1=\"" + fmt("%.1f", sx(0)) + "\" y1=\"" +
           fmt("%.1f", sy(*independent)) + "\" x2=\"" + fmt("%.1f", sx(1)) +
           "\" y2=\"" + fmt("%.1f", sy(*independent)) +
           "\" stroke=\"#7f7f7f\" stroke-dasharray=\"6 4\"/>\n";
  }
  for (const Series& line : series) {
    std::string points;
    for (const auto& [fraction, accuracy] : line.points)
      points += fmt("%.1f", sx(fraction)) + "," + fmt("%.1f", sy(accuracy)) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + line.color +
           "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    for (const auto& [fraction, accuracy] : line.points)
      svg += "<circle cx=\"" + fmt("%.1f", sx(fraction)) + "\" cy=\"" +
             fmt("%.1f", sy(accuracy)) + "\" r=\"3\" fill=\"" + line.color +
             "\"/>\n";
  }

  double legend_y = kTop + 8;
  auto legend_entry = [&](const std::string& label, const std::string& color,
                          bool dashed) {
    svg += "<line x1=\"" + fmt("%.1f", kWidth - 170) + "\" y1=\"" +
           fmt("%.1f", legend_y) + "\" x2=\"" + fmt("%.1f", kWidth - 140) +
           "\" y2=\"" + fmt("%.1f", legend_y) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"" +
           (dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    svg += "<text x=\"" + fmt("%.1f", kWidth - 134) + "\" y=\"" +
           fmt("%.1f", legend_y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + label +
           "</text>\n";
    legend_y += 16;
  };
  for (const Series& line : series) legend_entry(line.label, line.color, false);
  if (independent) legend_entry("independent", "#7f7f7f", true);

  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_report(
    const ResultsTable& table, const std::filesystem::path& out_dir) {
  if (table.rows.empty()) throw SpecError("emit_report: empty results table");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;

  auto write_file = [&](const std::filesystem::path& path,
                        const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report file: " + path.string());
    out << content;
    files.push_back(path);
  };

  write_file(out_dir / "report_table.csv", render_strategy_table(table));
  write_file(out_dir / "directional.csv",
             render_directional(directional_gaps(table)));

  std::vector<std::pair<std::string, std::string>> curves;
  for (const ResultRow& row : table.rows) {
    const auto key = std::make_pair(row.architecture, row.domain_id);
    if (std::find(curves.begin(), curves.end(), key) == curves.end())
      curves.push_back(key);
  }
  for (const auto& [arch, domain] : curves) {
    write_file(out_dir / ("curve_" + sanitize(arch) + "_" + sanitize(domain) +
                          ".svg"),
               render_curve_svg(table, arch, domain));
  }
  return files;
}

}  // namespace mdl::bench
