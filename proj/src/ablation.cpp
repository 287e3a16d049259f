#include "d2a2/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace d2a2 {

std::vector<AblationRow> ablation_rows(int table, const ModelConfig& full) {
  std::vector<AblationRow> rows;
  auto row = [&](std::string label, auto&& edit) {
    ModelConfig c = full;
    edit(c);
    rows.push_back({std::move(label), c});
  };
  switch (table) {
    case 2:
      row("baseline", [](ModelConfig& c) { c.use_dda = false, c.use_mfa = false; });
      row("w/o MFA", [](ModelConfig& c) { c.use_mfa = false; });
      row("w/o DDA", [](ModelConfig& c) { c.use_dda = false; });
      row("full", [](ModelConfig&) {});
      break;
    case 3:
      for (AlignMode mode : {AlignMode::None, AlignMode::Instance, AlignMode::Batch, AlignMode::Lda}) {
        for (bool dga : {false, true}) {
          row("DA=" + to_string(mode) + " DGA=" + (dga ? "on" : "off"), [&](ModelConfig& c) {
            c.use_mfa = false;
            c.lda_mode = mode;
            c.dga_enabled = dga;
            c.use_dda = mode != AlignMode::None || dga;
          });
        }
      }
      break;
    case 4:
      for (AttentionMode mode : {AttentionMode::None, AttentionMode::Channel, AttentionMode::Spatial,
                                 AttentionMode::Pixel}) {
        for (bool gc : {false, true}) {
          row(std::string("GC=") + (gc ? "on" : "off") + " attention=" + to_string(mode), [&](ModelConfig& c) {
            c.use_dda = false;
            c.gc_enabled = gc;
            c.attention_mode = mode;
            c.use_mfa = gc || mode != AttentionMode::None;
          });
        }
      }
      break;
    default: throw std::invalid_argument("ablation table must be 2, 3 or 4, got " + std::to_string(table));
  }
  return rows;
}

DeskProtocol desk_protocol() {
  DeskProtocol p;
  p.model.base_channels = 16;
  p.train.steps = 2000;
  p.train.batch_size = 4;
  p.train.crop_size = 32;
  return p;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& rows, const DeskProtocol& protocol,
                                         const std::function<void(const AblationResult&)>& on_row) {
  std::vector<SamplePair> data;
  for (int i = 0; i < protocol.pairs; ++i) {
    data.push_back(synth_scene(protocol.data_seed + static_cast<std::uint64_t>(i),
                               static_cast<std::size_t>(protocol.scene_size), protocol.scale));
  }
  std::vector<AblationResult> results;
  for (const auto& row : rows) {
    const auto start = std::chrono::steady_clock::now();
    D2A2Model<float> model(row.config);
    const TrainResult tr = train(model, data, protocol.train);
    AblationResult r;
    r.row = row;
    r.final_loss = dataset_l1(model, data);
    const std::size_t tail = std::min<std::size_t>(50, tr.losses.size());
    r.tail_loss = tail == 0 ? 0.0
                            : std::accumulate(tr.losses.end() - static_cast<std::ptrdiff_t>(tail), tr.losses.end(), 0.0) /
                                  static_cast<double>(tail);
    r.halted = tr.halted;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_row) on_row(r);
    results.push_back(std::move(r));
  }
  return results;
}

void write_ablation_csv(const std::vector<AblationResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "row,use_dda,use_mfa,lda_mode,dga_enabled,gc_enabled,attention_mode,final_loss,tail_loss,seconds,halted\n"
      << std::setprecision(9);
  for (const auto& r : results) {
    const ModelConfig& c = r.row.config;
    out << '"' << r.row.label << '"' << "," << c.use_dda << "," << c.use_mfa << "," << to_string(c.lda_mode) << ","
        << c.dga_enabled << "," << c.gc_enabled << "," << to_string(c.attention_mode) << "," << r.final_loss << ","
        << r.tail_loss << "," << r.seconds << "," << r.halted << "\n";
  }
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace d2a2
