// Copyright 2026 The ffattn Authors
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

#include "ffattn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ffattn/config.h"
#include "ffattn/errors.h"

namespace ffattn {
namespace {

constexpr char kTag[8] = {'F', 'F', 'A', 'T', 'T', 'N', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<unsigned char>(value >> (8 * i)));
    }
  }
  void str32(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> buf, std::string source)
      : buf_(std::move(buf)), source_(std::move(source)) {}

  const unsigned char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw DataError(source_ + ": truncated checkpoint");
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint() {
    const unsigned char* p = take(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
    return value;
  }
  std::string str(std::size_t n) {
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == buf_.size(); }
  const std::string& source() const { return source_; }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model) {
  Writer w;
  w.bytes(kTag, sizeof(kTag));
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string text = to_config_text(model.config());
  w.uint<std::uint64_t>(text.size());
  w.bytes(text.data(), text.size());

  const auto params = model.parameters();
  const auto names = model.parameter_names();
  w.uint<std::uint64_t>(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.str32(names[i]);
    w.uint<std::uint8_t>(std::is_same_v<T, double> ? 1 : 0);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params[i].rank()));
    for (std::size_t d : params[i].shape()) w.uint<std::uint64_t>(d);
    for (T value : params[i].data()) {
      if constexpr (std::is_same_v<T, double>) {
        w.uint<std::uint64_t>(std::bit_cast<std::uint64_t>(value));
      } else {
        w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(value));
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path.string());

  if (std::memcmp(r.take(sizeof(kTag)), kTag, sizeof(kTag)) != 0) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  Checkpoint ck;
  ck.version = r.uint<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(ck.version));
  }
  ck.config_text = r.str(r.uint<std::uint64_t>());
  const std::uint64_t count = r.uint<std::uint64_t>();
  for (std::uint64_t b = 0; b < count; ++b) {
    CheckpointBlob blob;
    blob.name = r.str(r.uint<std::uint32_t>());
    const std::uint8_t dtype = r.uint<std::uint8_t>();
    if (dtype > 1) throw DataError(path.string() + ": unknown dtype in blob " + blob.name);
    blob.stored_f64 = dtype == 1;
    const std::uint32_t rank = r.uint<std::uint32_t>();
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      blob.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
      total *= blob.shape.back();
    }
    if (total > (std::size_t{1} << 32)) throw DataError(path.string() + ": blob too large");
    blob.values.resize(total);
    for (double& v : blob.values) {
      v = blob.stored_f64 ? std::bit_cast<double>(r.uint<std::uint64_t>())
                          : static_cast<double>(std::bit_cast<float>(r.uint<std::uint32_t>()));
    }
    ck.blobs.push_back(std::move(blob));
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes after last blob");
  return ck;
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  const ConfigFile file = ConfigFile::parse(ck.config_text, path.string() + "[config]");
  const ModelConfig config = parse_model_config(file);
  file.reject_unused();

  Model<T> model(config, 0);
  std::map<std::string, const CheckpointBlob*> by_name;
  for (const auto& blob : ck.blobs) by_name[blob.name] = &blob;

  const auto current = model.parameters();
  const auto names = model.parameter_names();
  std::vector<Tensor<T>> loaded;
  loaded.reserve(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    auto it = by_name.find(names[i]);
    if (it == by_name.end()) throw DataError(path.string() + ": missing parameter " + names[i]);
    const CheckpointBlob& blob = *it->second;
    if (blob.shape != current[i].shape()) {
      throw DataError(path.string() + ": parameter " + names[i] + " has shape " +
                      shape_string(blob.shape) + ", expected " +
                      shape_string(current[i].shape()));
    }
    loaded.push_back(current[i].with_values(std::vector<T>(blob.values.begin(), blob.values.end())));
  }
  if (by_name.size() != current.size()) {
    throw DataError(path.string() + ": checkpoint holds parameters the model does not have");
  }
  model.set_parameters(loaded);
  return model;
}

template void save_checkpoint<float>(const std::filesystem::path&, const Model<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const Model<double>&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace ffattn
