#include "svt/transfer.hpp"

#include <map>

#include "svt/errors.hpp"

namespace svt::transfer {

std::string_view to_string(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::scratch: return "scratch";
    case ArchitectureKind::fine_tune: return "fine_tune";
    case ArchitectureKind::a2t: return "a2t";
    case ArchitectureKind::a2t_savt: return "a2t_savt";
  }
  return "unknown";
}

ArchitectureKind architecture_from_string(std::string_view name) {
  if (name == "scratch") return ArchitectureKind::scratch;
  if (name == "fine_tune") return ArchitectureKind::fine_tune;
  if (name == "a2t") return ArchitectureKind::a2t;
  if (name == "a2t_savt") return ArchitectureKind::a2t_savt;
  throw InvalidConfig("unknown architecture '" + std::string(name) +
                      "' (expected scratch, fine_tune, a2t or a2t_savt)");
}

std::vector<int> base_layer_sizes(int state_dim, int num_actions) {
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), kBaseHidden.begin(), kBaseHidden.end());
  sizes.push_back(num_actions);
  return sizes;
}

// ---------------------------------------------------------------------------
// MlpQ

MlpQ::MlpQ(Mlp net, bool last_layer_only) : net_(std::move(net)), last_layer_only_(last_layer_only) {}

Mat MlpQ::forward_train(const Mat& states) { return net_.forward(states, trace_); }

void MlpQ::backward(const Mat& output_grad, GradientBuffer& grads) {
  if (!last_layer_only_) {
    net_.backward(trace_, output_grad, grads.blocks);
    return;
  }
  // Only the output layer trains: its gradients are the last two blocks of a
  // full backward pass, computed directly here.
  const int last = net_.num_layers() - 1;
  grads.blocks.at(0).noalias() += output_grad * trace_.inputs[last].transpose();
  grads.blocks.at(1) += output_grad.rowwise().sum();
}

std::vector<Mat*> MlpQ::trainable_parameters() {
  if (!last_layer_only_) return net_.parameters();
  const int last = net_.num_layers() - 1;
  return {&net_.weight(last), &net_.bias(last)};
}

std::vector<const Mat*> MlpQ::owned_parameters() const { return net_.parameters(); }

std::unique_ptr<QArchitecture> MlpQ::clone() const {
  return std::make_unique<MlpQ>(net_, last_layer_only_);
}

// ---------------------------------------------------------------------------
// A2tQ

A2tQ::A2tQ(Mlp base, Mlp attention, std::vector<SourceNet> sources,
           std::optional<std::vector<SourceTransforms>> transforms)
    : base_(std::move(base)),
      attention_(std::move(attention)),
      sources_(std::move(sources)),
      transforms_(std::move(transforms)) {
  const int n = base_.input_dim();
  const int m = base_.output_dim();
  const int k = static_cast<int>(sources_.size());
  if (attention_.input_dim() != n || attention_.output_dim() != k + 1) {
    throw ShapeError("attention network must map " + std::to_string(n) + " inputs to " +
                     std::to_string(k + 1) + " logits");
  }
  for (const auto& src : sources_) {
    if (!src) throw MissingSources("null source network");
    if (src->input_dim() != n || src->output_dim() != m) {
      throw ShapeError("source network is " + std::to_string(src->input_dim()) + "->" +
                       std::to_string(src->output_dim()) + ", expected " + std::to_string(n) +
                       "->" + std::to_string(m));
    }
  }
  if (transforms_) {
    if (static_cast<int>(transforms_->size()) != k) {
      throw ShapeError("need one transform pair per source");
    }
    for (const auto& t : *transforms_) {
      if (t.state.dim() != n || t.action_value.dim() != m) {
        throw ShapeError("transform dimensions must be " + std::to_string(n) + " (state) and " +
                         std::to_string(m) + " (action values)");
      }
    }
  }
}

std::vector<Mat> A2tQ::source_terms(const Mat& states, std::vector<Mat>* transformed_states,
                                    std::vector<Mlp::Trace>* traces, std::vector<Mat>* raw) const {
  const std::size_t k = sources_.size();
  std::vector<Mat> out(k);
  if (traces) {
    traces->resize(k);
    if (transformed_states) transformed_states->resize(k);
    if (raw) raw->resize(k);
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!transforms_) {
      out[i] = traces ? sources_[i]->forward(states, (*traces)[i]) : sources_[i]->forward(states);
      continue;
    }
    const auto& t = (*transforms_)[i];
    Mat s = t.state.forward(states);
    Mat q = traces ? sources_[i]->forward(s, (*traces)[i]) : sources_[i]->forward(s);
    out[i] = t.action_value.forward(q);
    if (traces) {
      (*transformed_states)[i] = std::move(s);
      (*raw)[i] = std::move(q);
    }
  }
  return out;
}

namespace {

Mat mixture(const Mat& base_out, const std::vector<Mat>& terms, const Mat& weights) {
  Mat out = (base_out.array().rowwise() * weights.row(0).array()).matrix();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    out.array() += terms[i].array().rowwise() * weights.row(static_cast<Eigen::Index>(i) + 1).array();
  }
  return out;
}

}  // namespace

Mat A2tQ::attention_weights(const Mat& states) const {
  return nn::softmax_columns(attention_.forward(states));
}

Vec A2tQ::attention_weights(const Vec& state) const { return attention_weights(Mat(state)).col(0); }

Mat A2tQ::mix(const Mat& states, const Mat& weights) const {
  if (weights.rows() != num_sources() + 1 || weights.cols() != states.cols()) {
    throw ShapeError("mixture weights must be (k + 1) x batch");
  }
  return mixture(base_.forward(states), source_terms(states, nullptr, nullptr, nullptr), weights);
}

Mat A2tQ::q_values(const Mat& states) const {
  return mixture(base_.forward(states), source_terms(states, nullptr, nullptr, nullptr),
                 attention_weights(states));
}

Mat A2tQ::forward_train(const Mat& states) {
  cache_.states = states;
  cache_.base_out = base_.forward(states, cache_.base_trace);
  cache_.weights = nn::softmax_columns(attention_.forward(states, cache_.attention_trace));
  cache_.source_out = source_terms(states, &cache_.transformed_states, &cache_.source_traces,
                                   &cache_.source_raw);
  return mixture(cache_.base_out, cache_.source_out, cache_.weights);
}

void A2tQ::backward(const Mat& output_grad, GradientBuffer& grads) {
  const std::size_t k = sources_.size();
  const std::size_t base_blocks = 2 * static_cast<std::size_t>(base_.num_layers());
  const std::size_t att_blocks = 2 * static_cast<std::size_t>(attention_.num_layers());
  const std::size_t expected = base_blocks + att_blocks + (transforms_ ? 2 * k : 0);
  if (grads.size() != expected) throw ShapeError("A2T backward: wrong gradient buffer layout");
  std::span<Mat> blocks(grads.blocks);

  const Mat& w = cache_.weights;
  Mat base_grad = (output_grad.array().rowwise() * w.row(0).array()).matrix();
  base_.backward(cache_.base_trace, base_grad, blocks.subspan(0, base_blocks));

  // d/dw_j = <G, term_j> per sample, then through the softmax.
  Mat weight_grad(k + 1, output_grad.cols());
  weight_grad.row(0) = output_grad.cwiseProduct(cache_.base_out).colwise().sum();
  for (std::size_t i = 0; i < k; ++i) {
    weight_grad.row(i + 1) = output_grad.cwiseProduct(cache_.source_out[i]).colwise().sum();
  }
  const Eigen::RowVectorXd inner = w.cwiseProduct(weight_grad).colwise().sum();
  Mat logit_grad = (w.array() * (weight_grad.array().rowwise() - inner.array())).matrix();
  attention_.backward(cache_.attention_trace, logit_grad, blocks.subspan(base_blocks, att_blocks));

  if (!transforms_) return;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& t = (*transforms_)[i];
    Mat term_grad =
        (output_grad.array().rowwise() * w.row(static_cast<Eigen::Index>(i) + 1).array()).matrix();
    Mat& state_grad = grads.blocks[base_blocks + att_blocks + 2 * i];
    Mat& value_grad = grads.blocks[base_blocks + att_blocks + 2 * i + 1];
    const Mat raw_grad = t.action_value.backward(cache_.source_raw[i], term_grad, &value_grad);
    // Sources are frozen: only their input gradient is needed.
    const Mat input_grad = sources_[i]->backward(cache_.source_traces[i], raw_grad, {});
    t.state.backward(cache_.states, input_grad, &state_grad);
  }
}

std::vector<Mat*> A2tQ::trainable_parameters() {
  std::vector<Mat*> out = base_.parameters();
  for (Mat* p : attention_.parameters()) out.push_back(p);
  if (transforms_) {
    for (auto& t : *transforms_) {
      out.push_back(&t.state.matrix());
      out.push_back(&t.action_value.matrix());
    }
  }
  return out;
}

std::vector<const Mat*> A2tQ::owned_parameters() const {
  std::vector<const Mat*> out = base_.parameters();
  for (const Mat* p : attention_.parameters()) out.push_back(p);
  if (transforms_) {
    for (const auto& t : *transforms_) {
      out.push_back(&t.state.matrix());
      out.push_back(&t.action_value.matrix());
    }
  }
  return out;
}

std::unique_ptr<QArchitecture> A2tQ::clone() const {
  return std::make_unique<A2tQ>(base_, attention_, sources_, transforms_);
}

// ---------------------------------------------------------------------------

std::unique_ptr<QArchitecture> build_architecture(ArchitectureKind kind,
                                                  const std::vector<SourceNet>& sources,
                                                  int state_dim, int num_actions, Rng& rng,
                                                  const BuildOptions& options) {
  if (kind == ArchitectureKind::scratch) {
    return std::make_unique<MlpQ>(Mlp::xavier(base_layer_sizes(state_dim, num_actions), rng));
  }
  if (sources.empty()) {
    throw MissingSources(std::string(to_string(kind)) + " needs at least one source network");
  }
  if (kind == ArchitectureKind::fine_tune) {
    const Mlp& latest = *sources.back();
    if (latest.input_dim() != state_dim || latest.output_dim() != num_actions) {
      throw ShapeError("fine-tune source does not match the task dimensions");
    }
    return std::make_unique<MlpQ>(latest, /*last_layer_only=*/true);
  }
  const int k = static_cast<int>(sources.size());
  Mlp base = Mlp::xavier(base_layer_sizes(state_dim, num_actions), rng);
  std::vector<int> att_sizes{state_dim};
  att_sizes.insert(att_sizes.end(), kAttentionHidden.begin(), kAttentionHidden.end());
  att_sizes.push_back(k + 1);
  Mlp attention = Mlp::xavier(att_sizes, rng);
  if (kind == ArchitectureKind::a2t) {
    return std::make_unique<A2tQ>(std::move(base), std::move(attention), sources);
  }
  std::vector<SourceTransforms> transforms;
  for (int i = 0; i < k; ++i) {
    auto gs = LinearTransform::identity_with_noise(state_dim, options.transform_noise, rng);
    auto gx = LinearTransform::identity_with_noise(num_actions, options.transform_noise, rng);
    transforms.push_back({std::move(gs), std::move(gx)});
  }
  return std::make_unique<A2tQ>(std::move(base), std::move(attention), sources,
                                std::move(transforms));
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json save_architecture(const QArchitecture& arch, const io::CheckpointMeta& meta) {
  nlohmann::json doc{{"format", io::kCheckpointFormat}, {"kind", arch.kind()},
                     {"metadata", io::meta_to_json(meta)}};
  if (const auto* m = dynamic_cast<const MlpQ*>(&arch)) {
    doc["network"] = io::mlp_to_json(m->network());
    return doc;
  }
  const auto* a = dynamic_cast<const A2tQ*>(&arch);
  if (!a) throw IoError("cannot serialize architecture of kind " + arch.kind());
  doc["base"] = io::mlp_to_json(a->base());
  doc["attention"] = io::mlp_to_json(a->attention());
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : a->sources()) sources.push_back({{"content_hash", io::content_hash(*s)}});
  doc["sources"] = sources;
  if (a->has_transforms()) {
    nlohmann::json transforms = nlohmann::json::array();
    for (const auto& t : a->transforms()) {
      transforms.push_back({{"state", io::matrix_to_json(t.state.matrix())},
                            {"action_value", io::matrix_to_json(t.action_value.matrix())}});
    }
    doc["transforms"] = transforms;
  }
  return doc;
}

std::unique_ptr<QArchitecture> load_architecture(const nlohmann::json& doc,
                                                 const SourceResolver& resolve) {
  try {
    if (doc.at("format").get<std::string>() != io::kCheckpointFormat) {
      throw IoError("unsupported checkpoint format");
    }
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "scratch" || kind == "fine_tune" || kind == "mlp") {
      return std::make_unique<MlpQ>(io::mlp_from_json(doc.at("network")), kind == "fine_tune");
    }
    if (kind != "a2t" && kind != "a2t_savt") throw IoError("unknown checkpoint kind " + kind);
    std::vector<SourceNet> sources;
    for (const auto& s : doc.at("sources")) {
      const auto hash = s.at("content_hash").get<std::string>();
      SourceNet net = resolve ? resolve(hash) : nullptr;
      if (!net) throw IoError("unresolved source network " + hash);
      if (io::content_hash(*net) != hash) throw IoError("source network hash mismatch for " + hash);
      sources.push_back(std::move(net));
    }
    std::optional<std::vector<SourceTransforms>> transforms;
    if (kind == "a2t_savt") {
      transforms.emplace();
      for (const auto& t : doc.at("transforms")) {
        transforms->push_back({LinearTransform(io::matrix_from_json(t.at("state"))),
                               LinearTransform(io::matrix_from_json(t.at("action_value")))});
      }
    }
    return std::make_unique<A2tQ>(io::mlp_from_json(doc.at("base")),
                                  io::mlp_from_json(doc.at("attention")), std::move(sources),
                                  std::move(transforms));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace svt::transfer
