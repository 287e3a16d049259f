#pragma once

#include <functional>
#include <string>
#include <vector>

#include "d2a2/config.hpp"
#include "d2a2/train.hpp"

namespace d2a2 {

struct AblationRow {
  std::string label;
  ModelConfig config;
};

/// Rows of ablation table 2 (module removal), 3 (alignment variants, aggregation off)
/// or 4 (aggregation variants, alignment off), built from `full` by toggles only.
std::vector<AblationRow> ablation_rows(int table, const ModelConfig& full);

/// Small-scale training protocol shared by the ablation command and its tests.
struct DeskProtocol {
  ModelConfig model;
  TrainConfig train;
  int pairs = 20;
  int scene_size = 64;
  int scale = 4;
  std::uint64_t data_seed = 0;
};

DeskProtocol desk_protocol();

struct AblationResult {
  AblationRow row;
  double final_loss = 0.0;  // mean full-image L1 over the training set after training
  double tail_loss = 0.0;   // mean of the last 50 step losses
  double seconds = 0.0;
  bool halted = false;
};

std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& rows, const DeskProtocol& protocol,
                                         const std::function<void(const AblationResult&)>& on_row = {});

void write_ablation_csv(const std::vector<AblationResult>& results, const std::string& path);

}  // namespace d2a2
