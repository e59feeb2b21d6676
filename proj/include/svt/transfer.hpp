#pragma once

// The Q-network architectures compared across a task sequence: training from
// scratch, fine-tuning the last layer of the previous solution, A2T (an
// attention-weighted mixture of a fresh base network and frozen source
// networks) and A2T with learned linear state and action-value transforms
// around every source.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svt/checkpoint.hpp"
#include "svt/dqn.hpp"
#include "svt/nn.hpp"

namespace svt::transfer {

using dqn::QArchitecture;
using nn::GradientBuffer;
using nn::LinearTransform;
using nn::Mat;
using nn::Mlp;
using nn::Vec;

enum class ArchitectureKind { scratch, fine_tune, a2t, a2t_savt };

std::string_view to_string(ArchitectureKind kind);
/// Throws InvalidConfig for unknown names.
ArchitectureKind architecture_from_string(std::string_view name);

/// Hidden widths of the base Q-network and the attention network.
inline const std::vector<int> kBaseHidden = {64, 32, 16};
inline const std::vector<int> kAttentionHidden = {16};

using SourceNet = std::shared_ptr<const Mlp>;

/// A single Mlp Q-network. With last_layer_only set, only the output layer's
/// weight and bias are trainable (fine-tuning).
class MlpQ : public QArchitecture {
 public:
  explicit MlpQ(Mlp net, bool last_layer_only = false);

  std::string kind() const override { return last_layer_only_ ? "fine_tune" : "scratch"; }
  int state_dim() const override { return net_.input_dim(); }
  int num_actions() const override { return net_.output_dim(); }
  Mat q_values(const Mat& states) const override { return net_.forward(states); }
  using QArchitecture::q_values;
  Mat forward_train(const Mat& states) override;
  void backward(const Mat& output_grad, GradientBuffer& grads) override;
  std::vector<Mat*> trainable_parameters() override;
  std::vector<const Mat*> owned_parameters() const override;
  std::unique_ptr<QArchitecture> clone() const override;

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }
  bool last_layer_only() const { return last_layer_only_; }

 private:
  Mlp net_;
  bool last_layer_only_;
  Mlp::Trace trace_;
};

/// Per-source pair: g_s acts on the state before the source, g_x on its
/// Q-values after it.
struct SourceTransforms {
  LinearTransform state;
  LinearTransform action_value;
};

/// Q(s) = w0(s) Qbase(s) + sum_i wi(s) gx_i(Q_i(gs_i(s))), w = softmax(att(s)).
/// Without transforms the source terms are Q_i(s).
class A2tQ : public QArchitecture {
 public:
  A2tQ(Mlp base, Mlp attention, std::vector<SourceNet> sources,
       std::optional<std::vector<SourceTransforms>> transforms = std::nullopt);

  std::string kind() const override { return transforms_ ? "a2t_savt" : "a2t"; }
  int state_dim() const override { return base_.input_dim(); }
  int num_actions() const override { return base_.output_dim(); }
  Mat q_values(const Mat& states) const override;
  using QArchitecture::q_values;
  Mat forward_train(const Mat& states) override;
  void backward(const Mat& output_grad, GradientBuffer& grads) override;
  /// base, attention, then (g_s, g_x) per source when present.
  std::vector<Mat*> trainable_parameters() override;
  std::vector<const Mat*> owned_parameters() const override;
  std::unique_ptr<QArchitecture> clone() const override;

  /// Softmax attention weights, (k + 1) x batch.
  Mat attention_weights(const Mat& states) const;
  Vec attention_weights(const Vec& state) const;

  /// Mixture for externally supplied weights (k + 1 rows).
  Mat mix(const Mat& states, const Mat& weights) const;

  int num_sources() const { return static_cast<int>(sources_.size()); }
  bool has_transforms() const { return transforms_.has_value(); }
  const Mlp& base() const { return base_; }
  Mlp& base() { return base_; }
  const Mlp& attention() const { return attention_; }
  Mlp& attention() { return attention_; }
  const std::vector<SourceNet>& sources() const { return sources_; }
  std::vector<SourceTransforms>& transforms() { return *transforms_; }
  const std::vector<SourceTransforms>& transforms() const { return *transforms_; }

 private:
  /// Column-stacked source outputs after the transforms; fills the cache
  /// when traces is non-null.
  std::vector<Mat> source_terms(const Mat& states, std::vector<Mat>* transformed_states,
                                std::vector<Mlp::Trace>* traces, std::vector<Mat>* raw) const;

  Mlp base_;
  Mlp attention_;
  std::vector<SourceNet> sources_;
  std::optional<std::vector<SourceTransforms>> transforms_;

  struct Cache {
    Mat states;
    Mlp::Trace base_trace;
    Mlp::Trace attention_trace;
    Mat base_out;
    Mat weights;
    std::vector<Mat> transformed_states;
    std::vector<Mlp::Trace> source_traces;
    std::vector<Mat> source_raw;
    std::vector<Mat> source_out;
  } cache_;
};

struct BuildOptions {
  double transform_noise = 1e-3;
};

/// scratch: fresh Xavier base. fine_tune: copy of the most recent source with
/// only the last layer trainable. a2t: Xavier base and attention over the
/// frozen sources. a2t_savt: additionally identity-plus-noise transforms.
/// Throws MissingSources when a transfer kind gets no sources.
std::unique_ptr<QArchitecture> build_architecture(ArchitectureKind kind,
                                                  const std::vector<SourceNet>& sources,
                                                  int state_dim, int num_actions, Rng& rng,
                                                  const BuildOptions& options = {});

/// Base Mlp layer sizes [n, 64, 32, 16, m].
std::vector<int> base_layer_sizes(int state_dim, int num_actions);

/// Checkpoint document for any of the four architectures. A2T variants store
/// base, attention and transforms inline and reference each source by the
/// content hash of its network.
nlohmann::json save_architecture(const QArchitecture& arch, const io::CheckpointMeta& meta);

using SourceResolver = std::function<SourceNet(const std::string& content_hash)>;
/// Inverse of save_architecture. Throws IoError when a source hash cannot be
/// resolved or the document is malformed.
std::unique_ptr<QArchitecture> load_architecture(const nlohmann::json& doc,
                                                 const SourceResolver& resolve = {});

}  // namespace svt::transfer
