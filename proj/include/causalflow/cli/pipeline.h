#pragma once

#include "causalflow/causal/bundle.h"
#include "causalflow/causal/model.h"
#include "causalflow/cli/config.h"
#include "causalflow/data/records.h"
#include "causalflow/training/calibration.h"
#include "causalflow/training/search.h"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace causalflow::cli {

struct ArmTraining {
    training::RecordSplit split;
    std::vector<training::Trial<flow::ConditionalFlow>> trials;  // ranked
    std::vector<training::Trial<flow::DensityFlow>> support_trials;  // ranked
    training::SbcResult sbc;
    std::vector<training::CoverageRow> coverage;
};

struct TrainedModel {
    causal::CausalModel model;
    causal::BundleInfo bundle_info;
    ArmTraining treated;
    ArmTraining control;
    std::vector<data::CommunityRecord> outreach_records;
    std::optional<causal::OutreachCorrection> outreach;
    double wall_seconds = 0.0;
};

/// Trains q_T, q_C (top-5 ensembles), Q_T, Q_C (best support flows), resolves
/// the support threshold and the outreach correction, and runs SBC and
/// coverage on each arm's test split.
TrainedModel train_model(std::span<const data::CommunityRecord> records, const RunConfig& config);

/// Writes bundle/, per-arm trial reports, SBC and coverage CSVs, and a
/// diagnostics summary under dir.
void write_training_outputs(const std::filesystem::path& dir, const TrainedModel& trained);

}  // namespace causalflow::cli
