// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdl/dataset.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "mdl/rng.hpp"

namespace mdl::bench {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated dataset file: " + path);
  return v;
}

}  // namespace

void DomainDataset::validate() const {
  if (domain_id_.empty()) throw SpecError("dataset: empty domain_id");
  if (num_classes_ < 2)
    throw SpecError("dataset '" + domain_id_ + "': num_classes must be >= 2");
  for (int label : train_labels_)
    if (label < 0 || label >= num_classes_)
      throw SpecError("dataset '" + domain_id_ + "': train label " +
                      std::to_string(label) + " out of range");
  for (int label : val_labels_)
    if (label < 0 || label >= num_classes_)
      throw SpecError("dataset '" + domain_id_ + "': val label " +
                      std::to_string(label) + " out of range");
}

DomainDataset DomainDataset::synthetic(const std::string& domain_id,
                                       const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.train_count < 1 || spec.val_count < 1 ||
      spec.channels < 1 || spec.height < 1 || spec.width < 1)
    throw SpecError("synthetic dataset '" + domain_id + "': invalid spec");

  DomainDataset ds;
  ds.domain_id_ = domain_id;
  ds.num_classes_ = spec.num_classes;
  ds.channels_ = spec.channels;
  ds.height_ = spec.height;
  ds.width_ = spec.width;

  Rng rng = derive_rng(spec.seed, "synth/" + domain_id);
  const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
  const std::size_t image = static_cast<std::size_t>(spec.channels) * plane;

  // Class prototypes plus a per-domain channel transform, so domains differ
  // in input statistics and not only in labels.
  std::vector<float> prototypes(static_cast<std::size_t>(spec.num_classes) *
                                image);
  for (auto& v : prototypes) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<float> shift(spec.channels), scale(spec.channels);
  for (auto& v : shift) v = static_cast<float>(rng.uniform(-0.4, 0.4));
  for (auto& v : scale) v = static_cast<float>(rng.uniform(0.75, 1.3));

  auto generate = [&](int count, Tensor& x, std::vector<int>& labels) {
    x = Tensor({static_cast<std::size_t>(count),
                static_cast<std::size_t>(spec.channels),
                static_cast<std::size_t>(spec.height),
                static_cast<std::size_t>(spec.width)});
    labels.resize(count);
    for (int i = 0; i < count; ++i) {
      const int cls = i % spec.num_classes;
      labels[i] = cls;
      const float* proto =
          prototypes.data() + static_cast<std::size_t>(cls) * image;
      float* dst = x.data() + static_cast<std::size_t>(i) * image;
      for (int c = 0; c < spec.channels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t at = static_cast<std::size_t>(c) * plane + p;
          dst[at] =
              scale[c] * (proto[at] + spec.noise * rng.normal_float(0.0f, 1.0f)) +
              shift[c];
        }
      }
    }
  };
  generate(spec.train_count, ds.train_x_, ds.train_labels_);
  generate(spec.val_count, ds.val_x_, ds.val_labels_);
  ds.validate();
  return ds;
}

DomainDataset DomainDataset::from_file(const std::string& domain_id,
                                       const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a dataset file: " + path.string());
  const auto version = read_pod<std::uint32_t>(in, path.string());
  if (version != kVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));

  DomainDataset ds;
  ds.domain_id_ = domain_id;
  ds.num_classes_ =
      static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
  ds.channels_ = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
  ds.height_ = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
  ds.width_ = static_cast<int>(read_pod<std::uint32_t>(in, path.string()));
  const auto train_count = read_pod<std::uint64_t>(in, path.string());
  const auto val_count = read_pod<std::uint64_t>(in, path.string());
  const std::size_t image =
      static_cast<std::size_t>(ds.channels_) * ds.height_ * ds.width_;

  auto read_split = [&](std::uint64_t count, Tensor& x,
                        std::vector<int>& labels) {
    labels.resize(count);
    for (auto& label : labels)
      label = static_cast<int>(read_pod<std::int32_t>(in, path.string()));
    x = Tensor({static_cast<std::size_t>(count),
                static_cast<std::size_t>(ds.channels_),
                static_cast<std::size_t>(ds.height_),
                static_cast<std::size_t>(ds.width_)});
    in.read(reinterpret_cast<char*>(x.data()),
            static_cast<std::streamsize>(count * image * sizeof(float)));
    if (!in) throw IoError("truncated dataset file: " + path.string());
  };
  read_split(train_count, ds.train_x_, ds.train_labels_);
  read_split(val_count, ds.val_x_, ds.val_labels_);
  ds.validate();
  return ds;
}

void DomainDataset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(num_classes_));
  write_pod(out, static_cast<std::uint32_t>(channels_));
  write_pod(out, static_cast<std::uint32_t>(height_));
  write_pod(out, static_cast<std::uint32_t>(width_));
  write_pod(out, static_cast<std::uint64_t>(train_labels_.size()));
  write_pod(out, static_cast<std::uint64_t>(val_labels_.size()));
  auto write_split = [&](const Tensor& x, const std::vector<int>& labels) {
    for (int label : labels) write_pod(out, static_cast<std::int32_t>(label));
    out.write(reinterpret_cast<const char*>(x.data()),
              static_cast<std::streamsize>(x.numel() * sizeof(float)));
  };
  write_split(train_x_, train_labels_);
  write_split(val_x_, val_labels_);
  if (!out) throw IoError("failed while writing dataset: " + path.string());
}

void DomainDataset::fill_val_batch(std::size_t start, std::size_t count,
                                   Tensor& x, std::vector<int>& labels) const {
  const std::size_t image =
      static_cast<std::size_t>(channels_) * height_ * width_;
  x = Tensor({count, static_cast<std::size_t>(channels_),
              static_cast<std::size_t>(height_),
              static_cast<std::size_t>(width_)});
  labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::memcpy(x.data() + i * image, val_x_.data() + (start + i) * image,
                image * sizeof(float));
    labels[i] = val_labels_[start + i];
  }
}

void DomainDataset::fill_train_batch(const std::vector<int>& indices,
                                     Tensor& x,
                                     std::vector<int>& labels) const {
  const std::size_t image =
      static_cast<std::size_t>(channels_) * height_ * width_;
  x = Tensor({indices.size(), static_cast<std::size_t>(channels_),
              static_cast<std::size_t>(height_),
              static_cast<std::size_t>(width_)});
  labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(x.data() + i * image,
                train_x_.data() + static_cast<std::size_t>(indices[i]) * image,
                image * sizeof(float));
    labels[i] = train_labels_[indices[i]];
  }
}

DomainDataset::BatchStream::BatchStream(const DomainDataset& dataset,
                                        std::uint64_t seed, int batch_size)
    : dataset_(&dataset), seed_(seed), batch_size_(batch_size) {
  if (dataset.train_count() == 0)
    throw ConfigError("dataset '" + dataset.domain_id() +
                      "' has an empty train split");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  reshuffle();
}

void DomainDataset::BatchStream::reshuffle() {
  order_.resize(dataset_->train_count());
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng = derive_rng(mix_seed(seed_, "data/" + dataset_->domain_id()),
                       "epoch/" + std::to_string(epoch_));
  rng.shuffle(order_);
  cursor_ = 0;
}

void DomainDataset::BatchStream::next(Tensor& x, std::vector<int>& labels) {
  std::vector<int> indices;
  indices.reserve(batch_size_);
  while (static_cast<int>(indices.size()) < batch_size_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    indices.push_back(order_[cursor_++]);
  }
  dataset_->fill_train_batch(indices, x, labels);
}

}  // namespace mdl::bench
