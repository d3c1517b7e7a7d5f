#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "adabins/trainer.hpp"

namespace adabins {

struct AblationRow {
  std::string name;
  MetricReport metrics;
};

// The five design variants: plain regression plus hybrid regression over the
// four bin-width designs. All variants share the base config, corpus and
// seed; only the head wiring and (for plain regression) the loss change.
inline std::vector<std::pair<std::string, AppConfig>> ablation_variants(const AppConfig& base) {
  std::vector<std::pair<std::string, AppConfig>> out;
  {
    AppConfig c = base;
    c.model.kind = ModelKind::regression;
    c.loss_kind = LossKind::si;
    out.push_back({"Base+R", c});
  }
  auto bin_variant = [&](const char* name, BinKind kind, LossKind loss) {
    AppConfig c = base;
    c.model.kind = ModelKind::adabins;
    c.model.bin_kind = kind;
    c.loss_kind = loss;
    out.push_back({name, c});
  };
  bin_variant("Base+Uniform-Fix-HR", BinKind::uniform_fix, LossKind::si);
  bin_variant("Base+Log-Fix-HR", BinKind::log_fix, LossKind::si);
  bin_variant("Base+Train-Fix-HR", BinKind::train_fix, LossKind::si_bins);
  bin_variant("Base+AdaBins-HR", BinKind::adaptive, LossKind::si_bins);
  return out;
}

template <typename T = float>
AblationRow run_variant(const std::string& name, const AppConfig& cfg,
                        const std::string& out_dir) {
  Trainer<T> trainer(cfg, out_dir);
  trainer.run();
  MetricReport r = evaluate(trainer.model(), trainer.corpus().val, cfg.eval_protocol());
  return {name, r};
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-22s %8s %8s %8s %8s %8s %8s\n", "variant", "delta1",
                "delta2", "delta3", "rel", "rms", "log10");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-22s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  r.name.c_str(), r.metrics.delta1, r.metrics.delta2, r.metrics.delta3,
                  r.metrics.rel, r.metrics.rms, r.metrics.log10);
    out += line;
  }
  return out;
}

struct AblationReport {
  std::vector<AblationRow> variants;
  std::vector<std::pair<index_t, MetricReport>> n_sweep;
};

// Trains each named variant with the shared seed/corpus, then sweeps the bin
// count on the adaptive model. Writes ablation_table.txt and nsweep.txt.
template <typename T = float>
AblationReport ablate(const AppConfig& base, const std::vector<index_t>& n_sweep,
                      const std::string& out_dir, bool echo = false) {
  AblationReport rep;
  for (const auto& [name, cfg] : ablation_variants(base)) {
    rep.variants.push_back(run_variant<T>(name, cfg, out_dir + "/" + name));
    if (echo) std::printf("done %s\n", rep.variants.back().name.c_str());
  }
  for (index_t n : n_sweep) {
    AppConfig c = base;
    c.model.kind = ModelKind::adabins;
    c.model.bin_kind = BinKind::adaptive;
    c.model.mvit.n_bins = n;
    AblationRow row = run_variant<T>("N=" + std::to_string(n), c,
                                     out_dir + "/nsweep_" + std::to_string(n));
    rep.n_sweep.push_back({n, row.metrics});
    if (echo) std::printf("done N=%lld\n", static_cast<long long>(n));
  }

  std::ofstream table(out_dir + "/ablation_table.txt");
  table << format_ablation_table(rep.variants);
  std::ofstream sweep(out_dir + "/nsweep.txt");
  sweep << "n delta1 rel rms\n";
  for (const auto& [n, m] : rep.n_sweep) {
    char line[128];
    std::snprintf(line, sizeof(line), "%lld %.4f %.4f %.4f\n", static_cast<long long>(n),
                  m.delta1, m.rel, m.rms);
    sweep << line;
  }
  return rep;
}

}  // namespace adabins
