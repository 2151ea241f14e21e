#pragma once

// Orchestration: dataset pairing, training, registration, evaluation and the
// synthetic recovery experiment.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "georeg/config.hpp"
#include "georeg/idx.hpp"
#include "georeg/image.hpp"
#include "georeg/metrics.hpp"
#include "georeg/model.hpp"

namespace georeg {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PairSample {
  ImageGrid source;
  ImageGrid target;
  std::optional<DeformationField> gt;  // synthetic pairs only
  int label = -1;
};

// Stateless 64-bit mixing used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Uniform same-label pairs (i != j whenever the label has two members).
std::vector<PairSample> same_label_pairs(const LabeledImages& data, std::size_t count, std::uint64_t seed);

// Shape image, ground-truth field and target = source o phi_gt.
PairSample synthetic_pair(const RunConfig& cfg, std::uint64_t seed);
std::vector<PairSample> synthetic_pairs(const RunConfig& cfg, std::size_t count, std::uint64_t seed);

enum class Split { train, validation, test };

// Loads or generates the pairs for one split. For mnist the training split
// is resampled per epoch, so `epoch` selects the draw.
struct PairSource {
  RunConfig cfg;
  LabeledImages train_images;
  LabeledImages test_images;
  std::vector<PairSample> fixed_train;  // synthetic only

  static PairSource open(const RunConfig& cfg);
  std::vector<PairSample> train_epoch(std::size_t epoch) const;
  std::vector<PairSample> validation() const;
  std::vector<PairSample> test() const;
  std::size_t height() const;
  std::size_t width() const;
};

struct LevelLossStats {
  std::optional<double> interp;
  std::optional<double> refine;
};

struct EpochStats {
  std::size_t epoch = 0;          // 0 = before any update
  std::optional<double> loss;     // mean training J over the epoch
  std::vector<LevelLossStats> levels;
  double val_loss = 0.0;
  double val_dice = 0.0;
  double val_folding = 0.0;
};

std::string to_jsonl(const EpochStats& s);

struct TrainOptions {
  std::string out_dir;  // empty: no files written
  std::function<void(const EpochStats&)> on_epoch;
  bool verbose = false;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<EpochStats> epochs;
};

TrainResult train(const RunConfig& cfg, const TrainOptions& opts);

// Per-pair loss and gradient accumulation into params; returns the loss.
double accumulate_pair(ModelParams<float>& params, const ModelConfig& cfg, const LossWeights& weights,
                       const PairSample& pair, float scale, std::vector<LevelLossStats>* level_terms = nullptr);

// Loss terms without recording a tape.
double pair_loss(const ModelParams<float>& params, const ModelConfig& cfg, const LossWeights& weights,
                 const PairSample& pair);

struct RegisterOutput {
  DeformationField field;  // finest level, pixel units
  ImageGrid warped;
  // per level (finest first): initial estimate, then one field per refinement
  // step, each in that level's pixel units
  std::vector<std::vector<DeformationField>> level_fields;
  // mean |final - inherited| per level in finest-pixel units
  std::vector<double> contribution;
};

RegisterOutput register_pair(const ModelBundle& bundle, const ImageGrid& source, const ImageGrid& target);

// field.grdf, warped.pgm, overlay.ppm and levels/level<r>_<k>.grdf.
void write_register_outputs(const RegisterOutput& out, const ImageGrid& source, const std::string& dir);

struct EvalReport {
  std::size_t pairs = 0;
  MeanStd dice;
  MeanStd dice_identity;
  MeanStd hd95;
  MeanStd hd95_identity;
  MeanStd folding;
  std::optional<MeanStd> aee;
  std::optional<MeanStd> aee_identity;
  std::vector<MeanStd> contribution;  // per level
  // fraction of pairs where the coarsest level contributes more than the finest
  double coarse_dominates = 0.0;
  std::vector<double> per_pair_dice;
  std::vector<double> per_pair_dice_identity;
  std::vector<double> per_pair_folding;
  std::vector<double> per_pair_aee;
  std::vector<double> per_pair_aee_identity;
};

EvalReport evaluate(const ModelBundle& bundle, const std::vector<PairSample>& pairs);
std::string to_json(const EvalReport& r);

struct SynthBucket {
  double lo = 0.0, hi = 0.0;  // initial mean |u_gt| range, pixels
  std::size_t count = 0;
  double aee_initial = 0.0;
  double aee_registered = 0.0;
  double hd95 = 0.0;
  double folding = 0.0;
};

struct SynthTable {
  std::vector<SynthBucket> buckets;
  SynthBucket overall;
};

SynthTable synth_experiment(const ModelBundle& bundle, const std::vector<PairSample>& pairs,
                            const std::vector<double>& edges = {0.0, 1.0, 2.0, 4.0, 8.0});
std::string format_table(const SynthTable& t);

}  // namespace georeg
