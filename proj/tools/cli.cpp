// Copyright 2026 The segcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "segcond/segcond.hpp"

namespace segcond::cli {
namespace {

namespace fs = std::filesystem;

/// Data/validation failure; maps to exit code 1.
struct DataError : Error {
  using Error::Error;
};

/// Invalid flag combination caught after parsing; maps to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

// Writes the JSON report to `json_path`, or to `out` when no path is given.
// The human-readable table goes to `out` only when the JSON went to a file.
void emit(const Json& report, const std::string& json_path, std::ostream& out, const std::string& table) {
  const std::string text = report.dump(2) + "\n";
  if (json_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(json_path, std::ios::binary);
  if (!f) throw DataError("cannot write " + json_path);
  f << text;
  out << table;
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (auto& c : s) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  return s.empty() ? std::string("record") : s;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::vector<DatasetRecord> load(const std::string& path) {
  try {
    return load_manifest(path);
  } catch (const ManifestParseError& e) {
    throw DataError(e.what());
  }
}

// ---------------------------------------------------------------------------
// contour

struct ContourArgs {
  std::string manifest;
  std::string out_dir;
  bool gray = false;
};

int cmd_contour(const ContourArgs& a, std::ostream& out) {
  const auto records = load(a.manifest);
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    GrayContourMap gray;
    try {
      gray = merge_contours(to_instruction(rec));
    } catch (const Error& e) {
      throw DataError("record " + std::to_string(i) + " (" + rec.image_id + "): " + e.what());
    }
    const fs::path path = fs::path(a.out_dir) / (safe_file_stem(rec.image_id) + ".png");
    if (a.gray) {
      std::vector<std::uint8_t> px(gray.values.size());
      std::transform(gray.values.begin(), gray.values.end(), px.begin(),
                     [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
      png::write_gray8(path.string(), gray.width, gray.height, px);
    } else {
      const ContourImage img = to_rgb(gray);
      png::write_rgb8(path.string(), img.width, img.height, img.rgb);
    }
    out << path.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// masks

struct MasksArgs {
  std::string manifest;
  std::string kind = "saa";
  std::string grid;
  int downsample = kDefaultDownsample;
  std::string record;
  std::string out;
  std::size_t caption_cap = kDefaultCaptionCap;
};

const DatasetRecord& pick_record(const std::vector<DatasetRecord>& records, const std::string& id) {
  if (records.empty()) throw DataError("manifest has no records");
  if (id.empty()) return records.front();
  for (const auto& r : records) {
    if (r.image_id == id) return r;
  }
  throw DataError("no record with image_id " + id);
}

TokenLayout layout_for(const DatasetRecord& rec, int f, std::optional<std::pair<int, int>> grid,
                       std::size_t caption_cap) {
  const LayoutInstruction instr = to_instruction(rec);
  if (!grid) return layout_from_instruction(instr, f, caption_cap);
  const TokenEntityMap tokens = patchify_to_grid(assign_labels(instr), grid->first, grid->second);
  std::vector<int> ids;
  for (const auto& e : instr.entities) ids.push_back(e.id);
  const auto lens = caption_lengths(instr, caption_cap);
  return build_token_layout(tokens, lens, ids);
}

Json layout_json(const TokenLayout& layout) {
  Json j;
  j["l_text"] = layout.l_text;
  j["l_img"] = layout.l_img;
  j["grid"] = {layout.grid_rows, layout.grid_cols};
  Json ts = Json::array();
  for (const auto& r : layout.text_sets) {
    Json idx = Json::array();
    for (auto i = r.begin; i < r.end; ++i) idx.push_back(i);
    ts.push_back(std::move(idx));
  }
  j["text_sets"] = std::move(ts);
  j["image_sets"] = layout.image_sets;
  return j;
}

int cmd_masks(const MasksArgs& a, std::ostream& out) {
  std::optional<std::pair<int, int>> grid;
  if (!a.grid.empty()) {
    std::smatch m;
    if (!std::regex_match(a.grid, m, std::regex(R"((\d+)[xX](\d+))"))) {
      throw UsageError("--grid must look like RxC");
    }
    grid = std::make_pair(std::stoi(m[1]), std::stoi(m[2]));
  }
  const auto records = load(a.manifest);
  const DatasetRecord& rec = pick_record(records, a.record);
  const MaskKind kind = a.kind == "aia" ? MaskKind::kAttributeIsolation : MaskKind::kSemanticAlignment;

  TokenLayout layout;
  try {
    layout = layout_for(rec, a.downsample, grid, a.caption_cap);
  } catch (const Error& e) {
    throw DataError(rec.image_id + ": " + e.what());
  }
  const AttentionMask mask = build_mask(layout, kind);
  const ValidationReport report = check_reachability(mask);

  const std::size_t s = mask.size();
  std::vector<std::uint8_t> px(s * s);
  for (std::size_t q = 0; q < s; ++q) {
    for (std::size_t k = 0; k < s; ++k) px[q * s + k] = mask.allowed(q, k) ? 255 : 0;
  }
  if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  png::write_gray8(a.out, static_cast<int>(s), static_cast<int>(s), px);

  Json j;
  j["image_id"] = rec.image_id;
  j["kind"] = to_string(kind);
  j["size"] = s;
  j["layout"] = layout_json(layout);
  j["unreachable_rows"] = report.unreachable_rows;
  const fs::path json_path = fs::path(a.out).replace_extension(".json");
  std::ofstream f(json_path, std::ios::binary);
  if (!f) throw DataError("cannot write " + json_path.string());
  f << j.dump(2) << "\n";
  out << a.out << "\n" << json_path.string() << "\n";

  if (!report.ok()) {
    throw DataError("query row " + std::to_string(report.unreachable_rows.front()) + " has no allowed key");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// attend

struct RunConfig {
  std::uint64_t seed = 0;
  double gamma = kStrictGamma;
  bool scribble = false;
  int downsample = kDefaultDownsample;
  int dim = 64;
  int heads = 4;
  int layers = 4;
  int aia_start = -1;  // -1: scale the reference range to `layers`
  int aia_end = -1;
  bool citf = true;
  int lora_rank = 4;
  double lora_b_std = 0.0;
  std::size_t caption_cap = kDefaultCaptionCap;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("--gamma must lie in (0, 1]");
    if (downsample < 1) throw UsageError("--downsample must be >= 1");
    if (heads < 1 || dim < 1 || dim % heads != 0) throw UsageError("--dim must be a positive multiple of --heads");
    if ((dim / heads) % 4 != 0) throw UsageError("head dim (--dim / --heads) must be divisible by 4");
    if (layers < 1) throw UsageError("--layers must be >= 1");
    if (lora_rank < 1 || lora_rank > dim) throw UsageError("--lora-rank must lie in [1, --dim]");
    if (lora_b_std < 0.0) throw UsageError("--lora-b-std must be >= 0");
    if ((aia_start < 0) != (aia_end < 0)) throw UsageError("--aia-start and --aia-end go together");
    if (aia_start >= 0 && !(aia_start <= aia_end && aia_end <= layers)) {
      throw UsageError("need 0 <= --aia-start <= --aia-end <= --layers");
    }
  }

  LayerSchedule schedule() const {
    return aia_start < 0 ? scaled_schedule(layers) : make_schedule(layers, aia_start, aia_end);
  }
};

struct SequenceInputs {
  TokenMatrix text;
  TokenMatrix image;
  TokenMatrix cond;
  std::vector<GridPos> cond_positions;
  std::vector<std::size_t> masked_cond;  // condition tokens excluded as keys
};

struct StackResult {
  double row_sum_dev = 0.0;
  double masked_weight_max = 0.0;
  std::vector<double> first_layer_mass;
  TokenMatrix text;
  TokenMatrix image;
};

class Model {
 public:
  explicit Model(const RunConfig& cfg) : cfg_(cfg), schedule_(cfg.schedule()) {
    for (int l = 0; l < cfg.layers; ++l) {
      params_.push_back(init_branch_params(cfg.dim, cfg.lora_rank, derive_seed(cfg.seed, 100 + l), cfg.lora_b_std));
    }
    SplitMix64 rng(derive_seed(cfg.seed, 1));
    const int patch = cfg.downsample * cfg.downsample;
    patch_embed_ = random_normal(rng, cfg.dim, patch, 1.0 / std::sqrt(static_cast<double>(patch)));
  }

  const LayerSchedule& schedule() const { return schedule_; }

  /// Linear patch embedding of encoded contour patches into the model dim;
  /// zero patches stay exactly zero.
  TokenMatrix embed(const ConditionTokens& c) const { return c.tokens * patch_embed_.transpose(); }

  /// Residual stack of attention blocks. `gamma` empty means no bias at all.
  StackResult run(const SequenceInputs& in, const TokenLayout& layout, std::optional<double> gamma) {
    const std::size_t nc = static_cast<std::size_t>(in.cond.rows());
    TokenMatrix text = in.text;
    TokenMatrix image = in.image;
    TokenMatrix cond = in.cond;
    std::vector<std::size_t> masked_keys;
    for (auto i : in.masked_cond) masked_keys.push_back(layout.size() + i);
    const BiasMatrix bias =
        gamma ? build_bias(layout.l_text, layout.l_img, nc, *gamma) : BiasMatrix::zero(layout.l_text, layout.l_img, nc);

    StackResult res;
    for (int l = 0; l < cfg_.layers; ++l) {
      AttentionMask mask = extend_with_condition(*cache_.get(layout, schedule_.at(l)), nc);
      disallow_keys(mask, masked_keys);
      const BlockOutput out = block_forward(text, image, cond, layout, in.cond_positions,
                                            params_[static_cast<std::size_t>(l)], mask, bias, cfg_.heads);
      for (const auto& w : out.weights) {
        for (Eigen::Index q = 0; q < w.rows(); ++q) {
          res.row_sum_dev = std::max(res.row_sum_dev, std::abs(w.row(q).sum() - 1.0));
          for (Eigen::Index k = 0; k < w.cols(); ++k) {
            if (!mask.allowed(static_cast<std::size_t>(q), static_cast<std::size_t>(k))) {
              res.masked_weight_max = std::max(res.masked_weight_max, std::abs(w(q, k)));
            }
          }
        }
      }
      if (l == 0) res.first_layer_mass = condition_mass(out, layout.l_text, layout.l_img);
      text += out.text;
      image += out.image;
      if (nc > 0) cond += out.cond;
    }
    res.text = std::move(text);
    res.image = std::move(image);
    return res;
  }

 private:
  RunConfig cfg_;
  LayerSchedule schedule_;
  std::vector<BranchParams> params_;
  Matrix patch_embed_;
  MaskCache cache_;
};

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double max_delta(const StackResult& a, const StackResult& b) {
  double d = 0.0;
  if (a.text.size() > 0) d = std::max(d, (a.text - b.text).cwiseAbs().maxCoeff());
  if (a.image.size() > 0) d = std::max(d, (a.image - b.image).cwiseAbs().maxCoeff());
  return d;
}

int cmd_attend(const std::string& manifest, const RunConfig& cfg_in, const std::string& json_path,
               std::ostream& out) {
  RunConfig cfg = cfg_in;
  if (cfg.scribble) cfg.gamma = kScribbleGamma;
  cfg.validate();
  const auto records = load(manifest);
  Model model(cfg);

  std::set<double> sweep{0.01, 0.2, 0.5, 1.0};
  sweep.insert(cfg.gamma);

  Json report;
  Json jcfg;
  jcfg["seed"] = cfg.seed;
  jcfg["gamma"] = cfg.gamma;
  jcfg["downsample"] = cfg.downsample;
  jcfg["dim"] = cfg.dim;
  jcfg["heads"] = cfg.heads;
  jcfg["layers"] = cfg.layers;
  jcfg["aia_range"] = {model.schedule().aia_start, model.schedule().aia_end};
  jcfg["citf"] = cfg.citf;
  jcfg["lora_rank"] = cfg.lora_rank;
  jcfg["lora_b_std"] = cfg.lora_b_std;
  report["config"] = std::move(jcfg);

  Json jrecords = Json::array();
  double worst_row_sum = 0.0;
  double worst_masked = 0.0;
  double worst_gamma1 = 0.0;
  double worst_citf = 0.0;
  std::ostringstream table;
  table << std::left << std::setw(20) << "image_id" << std::setw(8) << "S" << std::setw(10) << "cond"
        << std::setw(14) << "row_sum_dev" << std::setw(14) << "cond_mass" << std::setw(14) << "mass@g=1"
        << "citf_delta\n";

  for (std::size_t ri = 0; ri < records.size(); ++ri) {
    const DatasetRecord& rec = records[ri];
    TokenLayout layout;
    ConditionTokens encoded;
    try {
      const LayoutInstruction instr = to_instruction(rec);
      layout = layout_from_instruction(instr, cfg.downsample, cfg.caption_cap);
      encoded = encode_contour(to_rgb(merge_contours(instr)), cfg.downsample, cfg.downsample * cfg.downsample);
    } catch (const Error& e) {
      throw DataError("record " + std::to_string(ri) + " (" + rec.image_id + "): " + e.what());
    }
    const ConditionTokens kept = filter_tokens(encoded);
    const std::vector<std::size_t> dropped = dropped_token_indices(encoded);

    SplitMix64 rng(derive_seed(cfg.seed, 0x10000 + ri));
    SequenceInputs filtered;
    filtered.text = random_normal(rng, static_cast<Eigen::Index>(layout.l_text), cfg.dim);
    filtered.image = random_normal(rng, static_cast<Eigen::Index>(layout.l_img), cfg.dim);
    filtered.cond = model.embed(kept);
    filtered.cond_positions = kept.source_positions;

    SequenceInputs masked = filtered;
    masked.cond = model.embed(encoded);
    masked.cond_positions = encoded.source_positions;
    masked.masked_cond = dropped;

    SequenceInputs unmasked = masked;
    unmasked.masked_cond.clear();

    const SequenceInputs& primary = cfg.citf ? filtered : masked;
    const StackResult main_run = model.run(primary, layout, cfg.gamma);
    const StackResult alt_run = model.run(cfg.citf ? masked : filtered, layout, cfg.gamma);
    const StackResult zero_influence = model.run(unmasked, layout, cfg.gamma);
    const StackResult gamma1 = model.run(primary, layout, 1.0);
    const StackResult unbiased = model.run(primary, layout, std::nullopt);

    Json jsweep = Json::array();
    double mass_cfg = 0.0;
    double mass_one = 0.0;
    for (double g : sweep) {
      const double m = g == cfg.gamma ? mean(main_run.first_layer_mass)
                       : g == 1.0     ? mean(gamma1.first_layer_mass)
                                      : mean(model.run(primary, layout, g).first_layer_mass);
      if (g == cfg.gamma) mass_cfg = m;
      if (g == 1.0) mass_one = m;
      jsweep.push_back({{"gamma", g}, {"mean", m}});
    }

    const double citf_delta = max_delta(main_run, alt_run);
    const double gamma1_delta = max_delta(gamma1, unbiased);
    worst_row_sum = std::max(worst_row_sum, main_run.row_sum_dev);
    worst_masked = std::max(worst_masked, main_run.masked_weight_max);
    worst_gamma1 = std::max(worst_gamma1, gamma1_delta);
    worst_citf = std::max(worst_citf, citf_delta);

    const std::uint64_t in_sequence = static_cast<std::uint64_t>(primary.cond.rows());
    CostProfile profile{layout.l_text, layout.l_img, 0, static_cast<std::uint64_t>(cfg.heads),
                        static_cast<std::uint64_t>(cfg.dim / cfg.heads), static_cast<std::uint64_t>(cfg.layers)};
    const CitfReport cost = citf_report(layout, encoded.size(), kept.size(), profile);

    Json jr;
    jr["image_id"] = rec.image_id;
    jr["tokens"] = {{"text", layout.l_text},
                    {"image", layout.l_img},
                    {"cond_total", encoded.size()},
                    {"cond_retained", kept.size()},
                    {"cond_in_sequence", in_sequence}};
    Json sched = Json::array();
    for (auto k : model.schedule().kinds) sched.push_back(to_string(k));
    jr["schedule"] = std::move(sched);
    jr["row_sum_max_deviation"] = main_run.row_sum_dev;
    jr["masked_weight_max"] = main_run.masked_weight_max;
    jr["condition_mass"] = {{"gamma", cfg.gamma}, {"mean", mass_cfg}, {"at_gamma_1", mass_one}};
    jr["condition_mass_sweep"] = std::move(jsweep);
    jr["gamma1_vs_unbiased_max_delta"] = gamma1_delta;
    jr["citf_equivalence_max_delta"] = citf_delta;
    jr["zero_token_influence_max_delta"] = max_delta(main_run, zero_influence);
    jr["outputs"] = {{"text_abs_sum", main_run.text.cwiseAbs().sum()},
                     {"image_abs_sum", main_run.image.cwiseAbs().sum()}};
    jr["macs"] = {{"with_citf", cost.setting("citf_avg").macs},
                  {"without_citf", cost.setting("no_citf").macs},
                  {"savings_pct", cost.setting("citf_avg").savings_pct}};
    jrecords.push_back(std::move(jr));

    table << std::left << std::setw(20) << rec.image_id << std::setw(8) << layout.size() << std::setw(10)
          << in_sequence << std::setw(14) << fmt(main_run.row_sum_dev, 3) << std::setw(14) << fmt(mass_cfg, 5)
          << std::setw(14) << fmt(mass_one, 5) << fmt(citf_delta, 3) << "\n";
  }

  const bool ok = worst_row_sum <= 1e-6 && worst_masked == 0.0;
  report["records"] = std::move(jrecords);
  report["summary"] = {{"records", records.size()},
                       {"max_row_sum_deviation", worst_row_sum},
                       {"max_masked_weight", worst_masked},
                       {"max_gamma1_vs_unbiased_delta", worst_gamma1},
                       {"max_citf_equivalence_delta", worst_citf},
                       {"invariants_ok", ok}};
  emit(report, json_path, out, table.str());
  if (!ok) throw DataError("attention invariant breached (row-sum deviation or nonzero masked weight)");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// filter

struct FilterArgs {
  std::string manifest;
  std::string out;
  std::string contours;
  std::string json;
  unsigned threads = 1;
  bool reject_missing_score = false;
};

int cmd_filter(const FilterArgs& a, std::ostream& out) {
  const auto records = load(a.manifest);
  FilterConfig cfg;
  cfg.reject_missing_score = a.reject_missing_score;
  if (!a.contours.empty()) fs::create_directories(a.contours);
  const auto write_contour = [&](const DatasetRecord& rec) {
    const ContourImage img = to_rgb(merge_contours(to_instruction(rec)));
    png::write_rgb8((fs::path(a.contours) / (safe_file_stem(rec.image_id) + ".png")).string(), img.width,
                    img.height, img.rgb);
  };
  PipelineResult result;
  try {
    result = run_pipeline(records, cfg, a.threads,
                          a.contours.empty() ? std::function<void(const DatasetRecord&)>{} : write_contour);
  } catch (const ImageIoError& e) {
    throw DataError(e.what());
  } catch (const DimensionMismatch& e) {
    throw DataError(e.what());
  }

  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw DataError("cannot write " + a.out);
    f << manifest_to_json(result.accepted).dump(2) << "\n";
  }

  const PipelineSummary& s = result.summary;
  Json report;
  report["summary"] = {{"total", s.total},
                       {"accepted", s.accepted},
                       {"rejected", {{"size", s.size},
                                     {"aspect", s.aspect},
                                     {"aesthetic", s.aesthetic},
                                     {"mask_count", s.mask_count}}}};
  Json jr = Json::array();
  std::ostringstream table;
  table << std::left << std::setw(24) << "image_id" << std::setw(10) << "accepted" << std::setw(12) << "stage"
        << "detail\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const FilterReport& r = result.reports[i];
    jr.push_back({{"image_id", records[i].image_id},
                  {"accepted", r.accepted},
                  {"stage", to_string(r.stage)},
                  {"reason", r.reason},
                  {"retained_entity_ids", r.retained_entity_ids}});
    std::string detail = r.reason;
    if (r.accepted) detail = std::to_string(r.retained_entity_ids.size()) + " entities retained";
    table << std::left << std::setw(24) << records[i].image_id << std::setw(10) << (r.accepted ? "yes" : "no")
          << std::setw(12) << to_string(r.stage) << detail << "\n";
  }
  report["records"] = std::move(jr);
  table << "total " << s.total << ", accepted " << s.accepted << ", rejected: size " << s.size << ", aspect "
        << s.aspect << ", aesthetic " << s.aesthetic << ", mask_count " << s.mask_count << "\n";
  emit(report, a.json, out, table.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// miou

int cmd_miou(const std::string& pred_path, const std::string& ref_path, const std::string& json_path,
             std::ostream& out) {
  const auto preds = load(pred_path);
  const auto refs = load(ref_path);
  std::map<std::string, const DatasetRecord*> by_id;
  for (const auto& p : preds) by_id[p.image_id] = &p;

  Json entities = Json::array();
  Json images = Json::array();
  std::vector<double> all;
  std::ostringstream table;
  table << std::left << std::setw(24) << "image_id" << std::setw(8) << "entity" << "iou\n";
  for (const auto& ref : refs) {
    const auto it = by_id.find(ref.image_id);
    if (it == by_id.end()) throw DataError("prediction manifest has no record " + ref.image_id);
    const DatasetRecord& pred = *it->second;
    if (pred.width != ref.width || pred.height != ref.height) {
      throw DataError(ref.image_id + ": predicted and reference dimensions differ");
    }
    std::vector<MaskPair> pairs;
    for (const auto& e : ref.entities) {
      BinaryMask pm(ref.width, ref.height);
      for (const auto& pe : pred.entities) {
        if (pe.id == e.id) pm = pe.mask;
      }
      pairs.push_back({e.id, std::move(pm), e.mask});
    }
    if (pairs.empty()) continue;
    for (const auto& p : pairs) {
      const double iou = entity_iou(p.pred, p.ref);
      all.push_back(iou);
      entities.push_back({{"image_id", ref.image_id}, {"id", p.id}, {"iou", iou}});
      table << std::left << std::setw(24) << ref.image_id << std::setw(8) << p.id << fmt(iou) << "\n";
    }
    images.push_back({{"image_id", ref.image_id}, {"miou", class_agnostic_miou(pairs)}});
  }
  if (all.empty()) throw DataError("no reference entities to evaluate");
  const double miou = mean(all);
  Json report;
  report["entities"] = std::move(entities);
  report["images"] = std::move(images);
  report["miou"] = miou;
  table << "class-agnostic MIoU: " << fmt(miou) << " over " << all.size() << " entities\n";
  emit(report, json_path, out, table.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// macs

struct MacsArgs {
  std::uint64_t l_text = 512 + 5 * 50;  // global prompt plus five 50-token regional prompts
  std::uint64_t l_img = 4096;           // 1024 x 1024 at 16x downsampling
  std::int64_t l_cond = -1;             // retained condition tokens; default l_img
  std::vector<std::uint64_t> retained;
  std::uint64_t heads = 24;
  std::uint64_t head_dim = 128;
  std::uint64_t layers = 57;
  std::string json;
};

int cmd_macs(const MacsArgs& a, std::ostream& out) {
  if (a.heads == 0 || a.head_dim == 0 || a.layers == 0 || a.l_img == 0 || a.l_text == 0) {
    throw UsageError("token counts, heads, head dim and layers must be positive");
  }
  std::vector<std::uint64_t> retained = a.retained;
  if (retained.empty()) retained.push_back(a.l_cond < 0 ? a.l_img : static_cast<std::uint64_t>(a.l_cond));
  for (auto r : retained) {
    if (r > a.l_img) throw UsageError("retained condition tokens cannot exceed --l-img");
  }
  const CostProfile profile{a.l_text, a.l_img, 0, a.heads, a.head_dim, a.layers};
  const CitfReport rep = citf_report(profile, a.l_img, retained);

  Json report;
  report["profile"] = {{"l_text", a.l_text}, {"l_img", a.l_img},       {"heads", a.heads},
                       {"head_dim", a.head_dim}, {"layers", a.layers}, {"pre_filter", a.l_img}};
  Json settings = Json::array();
  std::ostringstream table;
  table << std::left << std::setw(14) << "setting" << std::setw(10) << "l_cond" << std::setw(20) << "MACs"
        << "savings %\n";
  for (const auto& s : rep.settings) {
    settings.push_back({{"setting", s.name},
                        {"l_cond", s.l_cond},
                        {"macs", s.macs},
                        {"saved_macs", s.saved_macs},
                        {"savings_pct", s.savings_pct}});
    table << std::left << std::setw(14) << s.name << std::setw(10) << s.l_cond << std::setw(20) << s.macs
          << fmt(s.savings_pct, 4) << "\n";
  }
  report["settings"] = std::move(settings);
  emit(report, a.json, out, table.str());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation-mask conditioning toolkit: contour maps, attention masks, "
               "masked attention, dataset filtering and evaluation"};
  app.name(args.empty() ? "segcond" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);

  ContourArgs contour_args;
  auto* contour = app.add_subcommand("contour", "Write one entity contour map PNG per manifest record");
  contour->add_option("manifest", contour_args.manifest, "Manifest JSON")->required();
  contour->add_option("-o,--out-dir", contour_args.out_dir, "Output directory")->required();
  contour->add_flag("--gray", contour_args.gray, "Write 8-bit grayscale instead of RGB");

  MasksArgs masks_args;
  auto* masks = app.add_subcommand("masks", "Render a SAA or AIA attention mask as PNG plus index sets as JSON");
  masks->add_option("manifest", masks_args.manifest, "Manifest JSON")->required();
  masks->add_option("--kind", masks_args.kind, "saa or aia")->check(CLI::IsMember({"saa", "aia"}));
  masks->add_option("--grid", masks_args.grid, "Token grid RxC (overrides --downsample)");
  masks->add_option("--downsample", masks_args.downsample, "Pixels per token side")->check(CLI::PositiveNumber);
  masks->add_option("--record", masks_args.record, "image_id to render (default: first record)");
  masks->add_option("--caption-cap", masks_args.caption_cap, "Maximum tokens per caption")
      ->check(CLI::PositiveNumber);
  masks->add_option("-o,--out", masks_args.out, "Output PNG path; JSON goes next to it")->required();

  std::string attend_manifest;
  std::string attend_json;
  RunConfig cfg;
  bool no_citf = false;
  auto* attend = app.add_subcommand("attend", "Run the desk-scale attention stack and report invariants as JSON");
  attend->add_option("manifest", attend_manifest, "Manifest JSON")->required();
  attend->add_option("--seed", cfg.seed, "64-bit seed for parameters and demo inputs");
  attend->add_option("--gamma", cfg.gamma, "Shape guidance strength in (0, 1]");
  attend->add_flag("--scribble", cfg.scribble, "Loose scribble-style control (gamma = 0.2)");
  attend->add_flag("--no-citf", no_citf,
                   "Keep blank condition tokens in the sequence (masked as keys) instead of dropping them");
  attend->add_option("--downsample", cfg.downsample, "Pixels per token side");
  attend->add_option("--dim", cfg.dim, "Model dim");
  attend->add_option("--heads", cfg.heads, "Attention heads");
  attend->add_option("--layers", cfg.layers, "Attention blocks");
  attend->add_option("--aia-start", cfg.aia_start, "First attribute-isolation layer (0-based)");
  attend->add_option("--aia-end", cfg.aia_end, "One past the last attribute-isolation layer");
  attend->add_option("--lora-rank", cfg.lora_rank, "Adapter rank");
  attend->add_option("--lora-b-std", cfg.lora_b_std, "Stddev of adapter B init (0 = untrained)");
  attend->add_option("--caption-cap", cfg.caption_cap, "Maximum tokens per caption");
  attend->add_option("--json", attend_json, "Write the JSON report here and print a table instead");

  FilterArgs filter_args;
  auto* filter = app.add_subcommand("filter", "Apply the dataset curation filters to a manifest");
  filter->add_option("manifest", filter_args.manifest, "Manifest JSON")->required();
  filter->add_option("-o,--out", filter_args.out, "Filtered manifest output path");
  filter->add_option("--contours", filter_args.contours, "Directory for contour maps of accepted records");
  filter->add_option("--json", filter_args.json, "Write the JSON report here and print a table instead");
  filter->add_option("--threads", filter_args.threads, "Worker threads")->check(CLI::PositiveNumber);
  filter->add_flag("--reject-missing-score", filter_args.reject_missing_score,
                   "Reject records without an aesthetic score");

  std::string pred_path;
  std::string ref_path;
  std::string miou_json;
  auto* miou = app.add_subcommand("miou", "Class-agnostic MIoU between predicted and reference manifests");
  miou->add_option("--pred", pred_path, "Predicted masks manifest")->required();
  miou->add_option("--ref", ref_path, "Reference masks manifest")->required();
  miou->add_option("--json", miou_json, "Write the JSON report here and print a table instead");

  MacsArgs macs_args;
  auto* macs = app.add_subcommand("macs", "Attention MACs with and without condition token filtering");
  macs->add_option("--l-text", macs_args.l_text, "Text tokens");
  macs->add_option("--l-img", macs_args.l_img, "Image tokens (also the unfiltered condition token count)");
  macs->add_option("--l-cond", macs_args.l_cond, "Retained condition tokens (default: --l-img)");
  macs->add_option("--retained", macs_args.retained, "Retained counts over a dataset (min/avg/max)")
      ->delimiter(',');
  macs->add_option("--heads", macs_args.heads, "Attention heads");
  macs->add_option("--head-dim", macs_args.head_dim, "Per-head dim");
  macs->add_option("--layers", macs_args.layers, "Transformer layers");
  macs->add_option("--json", macs_args.json, "Write the JSON report here and print a table instead");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back("segcond");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*contour) return cmd_contour(contour_args, out);
    if (*masks) return cmd_masks(masks_args, out);
    if (*attend) {
      cfg.citf = !no_citf;
      return cmd_attend(attend_manifest, cfg, attend_json, out);
    }
    if (*filter) return cmd_filter(filter_args, out);
    if (*miou) return cmd_miou(pred_path, ref_path, miou_json, out);
    if (*macs) return cmd_macs(macs_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace segcond::cli
