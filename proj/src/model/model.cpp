#include "tabicl/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "tabicl/errors.hpp"
#include "tabicl/ops.hpp"

TABICL_NS_BEGIN

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return {
      {"col", {{"d", c.col.d}, {"k_inducing", c.col.k_inducing}, {"n_isab", c.col.n_isab}, {"heads", c.col.heads}}},
      {"row",
       {{"layers", c.row.layers},
        {"heads", c.row.heads},
        {"d", c.row.d},
        {"n_cls", c.row.n_cls},
        {"rope_base", c.row.rope.base},
        {"rope_enabled", c.row.rope.enabled}}},
      {"icl",
       {{"layers", c.icl.layers},
        {"heads", c.icl.heads},
        {"model_dim", c.icl.model_dim},
        {"c_max", c.icl.c_max},
        {"head_hidden", c.icl.head_hidden}}},
  };
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  const auto& col = j.at("col");
  c.col = {col.at("d"), col.at("k_inducing"), col.at("n_isab"), col.at("heads")};
  const auto& row = j.at("row");
  c.row.layers = row.at("layers");
  c.row.heads = row.at("heads");
  c.row.d = row.at("d");
  c.row.n_cls = row.at("n_cls");
  c.row.rope.base = row.at("rope_base");
  c.row.rope.enabled = row.at("rope_enabled");
  const auto& icl = j.at("icl");
  c.icl = {icl.at("layers"), icl.at("heads"), icl.at("model_dim"), icl.at("c_max"), icl.at("head_hidden")};
  return c;
}

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct RawCheckpoint {
  json header;
  std::vector<char> blob;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || header_len == 0 || header_len > (1u << 28)) throw DataError("corrupt checkpoint header in " + path);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("truncated checkpoint header in " + path);
  RawCheckpoint raw;
  try {
    raw.header = json::parse(header);
  } catch (const json::exception& e) {
    throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  raw.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

}  // namespace

std::size_t ClassProbabilities::argmax(std::size_t r) const {
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c)
    if (at(r, c) > at(r, best)) best = c;
  return best;
}

ClassProbabilities to_probabilities(const Tensor& p, std::size_t classes) {
  if (p.rank() != 2 || classes > p.dim(1)) throw ShapeError("to_probabilities expects [rows, >= classes]");
  ClassProbabilities out{p.dim(0), classes, std::vector<double>(p.dim(0) * classes)};
  const auto v = p.data();
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < classes; ++c) out.at(r, c) = v[r * p.dim(1) + c];
  return out;
}

TabIclModel::TabIclModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  col = ColumnEmbedder(config_.col, rng);
  row = RowInteractor(config_.row, rng);
  icl = IclPredictor(config_.icl, rng);
}

Tensor TabIclModel::row_embeddings(const Tensor& x, std::size_t n_train) const {
  const auto emb = col.embed_table(x, n_train);
  ++counters_->embed_table;
  Tensor h = row(emb.E);
  ++counters_->row_interact;
  return h;
}

Tensor TabIclModel::logits_from_embeddings(const Tensor& h, std::span<const int> y_train, std::size_t n_classes) const {
  ++counters_->icl_forward;
  return icl.logits(icl.fuse_labels(h, y_train, n_classes), y_train.size());
}

ClassProbabilities TabIclModel::predict_from_embeddings(const Tensor& h, std::span<const int> y_train,
                                                        std::size_t n_classes) const {
  NoGradGuard guard;
  return to_probabilities(ops::softmax_active(logits_from_embeddings(h, y_train, n_classes), n_classes), n_classes);
}

ClassProbabilities TabIclModel::predict_dataset(const Tensor& x, std::span<const int> y_train, std::size_t n_classes) const {
  if (n_classes > config_.icl.c_max) {
    throw ShapeError(std::to_string(n_classes) + " classes exceed the native limit; use the class tree");
  }
  NoGradGuard guard;
  return predict_from_embeddings(row_embeddings(x, y_train.size()), y_train, n_classes);
}

ParameterList TabIclModel::embedding_parameters() const {
  ParameterList out;
  col.collect("col", out);
  row.collect("row", out);
  return out;
}

ParameterList TabIclModel::icl_parameters() const {
  ParameterList out;
  icl.collect("icl", out);
  return out;
}

ParameterList TabIclModel::parameters() const {
  ParameterList out = embedding_parameters();
  icl.collect("icl", out);
  return out;
}

std::size_t TabIclModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

void save_checkpoint(const std::string& path, const TabIclModel& model, const std::string& metadata_json) {
  json header;
  json meta;
  try {
    meta = json::parse(metadata_json);
  } catch (const json::exception& e) {
    throw DataError("checkpoint metadata is not valid JSON: " + std::string(e.what()));
  }
  meta["model_config"] = config_to_json(model.config());
  header["__metadata__"] = meta;
  std::uint64_t offset = 0;
  const auto params = model.parameters();
  for (const auto& p : params) {
    const std::uint64_t bytes = p.tensor.numel() * sizeof(float);
    header[p.name] = {{"dtype", "F32"}, {"shape", p.tensor.shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto data = p.tensor.data();
    std::vector<float> f(data.begin(), data.end());
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed while writing checkpoint " + path);
}

TabIclModel load_checkpoint(const std::string& path) {
  const RawCheckpoint raw = read_raw(path);
  if (!raw.header.contains("__metadata__") || !raw.header["__metadata__"].contains("model_config")) {
    throw DataError("checkpoint " + path + " has no model config");
  }
  ModelConfig config;
  try {
    config = config_from_json(raw.header["__metadata__"]["model_config"]);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model config in checkpoint: " + std::string(e.what()));
  }
  TabIclModel model(config);
  for (const auto& p : model.parameters()) {
    if (!raw.header.contains(p.name)) throw DataError("checkpoint lacks tensor " + p.name);
    const auto& entry = raw.header[p.name];
    if (entry.at("shape").get<Shape>() != p.tensor.shape()) throw DataError("shape mismatch for tensor " + p.name);
    const auto begin = entry.at("data_offsets")[0].get<std::uint64_t>();
    const auto end = entry.at("data_offsets")[1].get<std::uint64_t>();
    if (end > raw.blob.size() || end - begin != p.tensor.numel() * sizeof(float)) {
      throw DataError("tensor " + p.name + " lies outside the checkpoint data");
    }
    std::vector<float> f(p.tensor.numel());
    std::memcpy(f.data(), raw.blob.data() + begin, end - begin);
    Tensor target = p.tensor;
    auto dst = target.mutable_data();
    std::copy(f.begin(), f.end(), dst.begin());
  }
  return model;
}

std::string checkpoint_metadata(const std::string& path) {
  const RawCheckpoint raw = read_raw(path);
  return raw.header.value("__metadata__", json::object()).dump();
}

TABICL_NS_END
