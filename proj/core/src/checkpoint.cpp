// Copyright 2026 The gradinv Authors
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

#include "gradinv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gradinv/errors.hpp"

namespace gradinv::checkpoint {
namespace {

constexpr char kMagic[8] = {'G', 'I', 'N', 'V', 'A', 'R', 'R', '1'};

static_assert(std::endian::native == std::endian::little,
              "array files are written in native little-endian order");

std::string bn_name(const char* what, std::size_t layer) {
  return "bn" + std::to_string(layer + 1) + "." + what;
}

}  // namespace

const NamedArray& ArrayFile::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw FormatError("array '" + name + "' missing from file");
}

bool ArrayFile::contains(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void write_arrays(const std::filesystem::path& path, const ArrayFile& file) {
  nlohmann::json header;
  header["dtype"] = "float64";
  header["meta"] = file.meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : file.arrays) {
    if (static_cast<std::int64_t>(a.data.size()) != shape_numel(a.shape)) {
      throw ShapeError("array '" + a.name + "' data does not match shape " +
                       shape_str(a.shape));
    }
    header["arrays"].push_back(
        {{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.data.size();
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : file.arrays) {
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write to " + path.string());
}

ArrayFile read_arrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a gradinv array file");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad header in " + path.string() + ": " + e.what());
  }
  if (header.value("dtype", "") != "float64") {
    throw FormatError("unsupported dtype in " + path.string());
  }
  ArrayFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    a.data.resize(shape_numel(a.shape));
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!in) throw FormatError("truncated payload in " + path.string());
    file.arrays.push_back(std::move(a));
  }
  return file;
}

void save_checkpoint(const std::filesystem::path& path,
                     const models::ParameterSet& params,
                     nlohmann::json extra_meta) {
  ArrayFile file;
  file.meta = std::move(extra_meta);
  file.meta["model"] = models::to_json(params.spec());
  file.meta["kind"] = "checkpoint";
  for (const auto& p : params.params()) {
    file.arrays.push_back({p.name, p.value.shape(), p.value.to_vector()});
  }
  const auto& bn = params.bn();
  for (std::size_t l = 0; l < bn.mean.size(); ++l) {
    file.arrays.push_back({bn_name("running_mean", l), bn.mean[l].shape(),
                           bn.mean[l].to_vector()});
    file.arrays.push_back({bn_name("running_var", l), bn.variance[l].shape(),
                           bn.variance[l].to_vector()});
  }
  write_arrays(path, file);
}

models::ParameterSet load_checkpoint(const std::filesystem::path& path) {
  const auto file = read_arrays(path);
  if (!file.meta.contains("model")) {
    throw FormatError(path.string() + " carries no model spec");
  }
  const auto spec = models::model_spec_from_json(file.meta.at("model"));
  // Rebuild the layout, then overwrite every value from the file.
  auto params = models::init_parameters(spec, 0);
  std::vector<Tensor> values;
  for (const auto& p : params.params()) {
    const auto& a = file.get(p.name);
    if (a.shape != p.value.shape()) {
      throw FormatError("checkpoint array '" + p.name + "' has shape " +
                        shape_str(a.shape) + ", model expects " +
                        shape_str(p.value.shape()));
    }
    values.push_back(Tensor::from_data(a.shape, a.data));
  }
  params.set_values(std::move(values));
  auto& bn = params.bn();
  for (std::size_t l = 0; l < bn.mean.size(); ++l) {
    const auto& m = file.get(bn_name("running_mean", l));
    const auto& v = file.get(bn_name("running_var", l));
    bn.mean[l] = Tensor::from_data(m.shape, m.data);
    bn.variance[l] = Tensor::from_data(v.shape, v.data);
  }
  return params;
}

void save_gradients(const std::filesystem::path& path,
                    const models::ParameterSet& layout,
                    const models::GradientSet& grads) {
  if (grads.size() != layout.size()) {
    throw StructuralError("gradient set not aligned with parameter layout");
  }
  ArrayFile file;
  file.meta["kind"] = "gradients";
  for (std::size_t i = 0; i < grads.size(); ++i) {
    file.arrays.push_back(
        {layout.params()[i].name, grads[i].shape(), grads[i].to_vector()});
  }
  write_arrays(path, file);
}

models::GradientSet load_gradients(const std::filesystem::path& path,
                                   const models::ParameterSet& layout) {
  const auto file = read_arrays(path);
  models::GradientSet grads;
  for (const auto& p : layout.params()) {
    const auto& a = file.get(p.name);
    if (a.shape != p.value.shape()) {
      throw FormatError("gradient '" + p.name + "' has shape " +
                        shape_str(a.shape));
    }
    grads.push_back(Tensor::from_data(a.shape, a.data));
  }
  return grads;
}

}  // namespace gradinv::checkpoint
