#pragma once

// Quantitative evaluation under the single-flip protocol: editing accuracy
// through a frozen attribute predictor, preservation error over the fixed
// attribute-irrelevant regions, mask export grids, and the ablation runner.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "attredit/image_io.hpp"
#include "attredit/nets.hpp"
#include "attredit/synth.hpp"
#include "attredit/train.hpp"

namespace attredit {

// An editing backend: maps stored samples plus target attribute rows to
// edited images [N,3,H,W]. Implementations must not mutate any model
// parameters (checked by the harness).
class EditModel {
 public:
  virtual ~EditModel() = default;
  virtual Tensor<float> edit(const Dataset& ds, const std::vector<int>& idx,
                             const std::vector<std::vector<uint8_t>>& targets)
      = 0;
  virtual std::string name() const = 0;
};

// Runs the trained generator in eval mode (running batch-norm statistics).
class CheckpointModel : public EditModel {
 public:
  explicit CheckpointModel(std::shared_ptr<GeneratorNet<float>> gen)
      : gen_(std::move(gen)) {}
  Tensor<float> edit(const Dataset& ds, const std::vector<int>& idx,
                     const std::vector<std::vector<uint8_t>>& targets)
      override;
  std::string name() const override { return "checkpoint"; }
  GeneratorNet<float>& generator() { return *gen_; }

 private:
  std::shared_ptr<GeneratorNet<float>> gen_;
};

// Returns inputs unchanged; the floor baseline for editing accuracy and
// the zero baseline for preservation error.
class IdentityModel : public EditModel {
 public:
  Tensor<float> edit(const Dataset& ds, const std::vector<int>& idx,
                     const std::vector<std::vector<uint8_t>>& targets)
      override;
  std::string name() const override { return "identity"; }
};

// Re-renders each sample with the target attributes through the glyph
// renderer (requires the manifest's per-sample seeds), then quantizes the
// way the dataset file does, so untouched pixels match stored ones
// exactly.
class OracleModel : public EditModel {
 public:
  explicit OracleModel(std::vector<uint64_t> seeds) : seeds_(std::move(seeds)) {}
  Tensor<float> edit(const Dataset& ds, const std::vector<int>& idx,
                     const std::vector<std::vector<uint8_t>>& targets)
      override;
  std::string name() const override { return "oracle"; }

 private:
  std::vector<uint64_t> seeds_;
};

// accuracy_i = fraction of single-flip edits of attribute i for which the
// predictor's thresholded bit matches the target.
std::vector<double> editing_accuracy(EditModel& model,
                                     const PredictorNet<float>& predictor,
                                     const Dataset& test);

// error_i = mean over samples of the mean absolute per-channel pixel
// difference restricted to irrelevant_region(i), for the flip of
// attribute i. Raw scale (images in [-1,1] give values in [0,2]).
std::vector<double> preservation_error(EditModel& model, const Dataset& test);

struct EvalReport {
  std::vector<double> accuracy, error;  // per attribute, error raw
  double mean_accuracy = 0, mean_error = 0;
  std::vector<double> predictor_accuracy;  // measured on the test split
  int sample_count = 0;
  std::string model_name, config_echo;

  // Self-describing tab-separated report; errors also printed x100.
  std::string to_tsv() const;
};

// Measures the predictor on the test split first and refuses to evaluate
// below the floor; asserts that neither the model nor the predictor
// parameters change during evaluation.
EvalReport evaluate(EditModel& model, const PredictorNet<float>& predictor,
                    const Dataset& test, double predictor_floor = 0.98,
                    const std::string& config_echo = "");

// Writes a one-row grid for one sample: merged masks of every mask level
// (nearest-upsampled to image size), per-attribute finest masks, and the
// channel-summed deviation map |edited - input| normalized by its maximum.
void export_masks(const GeneratorNet<float>& gen, const SynthSample& sample,
                  const std::vector<uint8_t>& target_attrs,
                  const std::string& path, ImageWriteStats* stats = nullptr);

struct AblationConfig {
  TrainConfig base;  // the "full" variant; others are derived from it
  PredictorTrainConfig predictor;
  int n_train = 2000, n_test = 500;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::string work_dir = ".";
  double predictor_floor = 0.98;
};

struct AblationRow {
  std::string variant;
  uint64_t seed = 0;
  double accuracy = 0, error = 0;  // means over attributes, error raw
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::vector<std::string> variants() const;
  double mean(const std::string& variant, bool err) const;
  double stdev(const std::string& variant, bool err) const;
  std::string to_tsv() const;
};

// Trains and evaluates every variant on every seed: full, w/o residual,
// single mask, sparsity weight 0, overlap weight 0, and 1..4 mask levels
// (4 levels is the full model and reuses its numbers).
AblationTable run_ablations(const AblationConfig& cfg);

// FNV-1a over a parameter store's float payloads; used for purity checks.
uint64_t param_bytes_hash(const ParamStore<float>& ps);

}  // namespace attredit
