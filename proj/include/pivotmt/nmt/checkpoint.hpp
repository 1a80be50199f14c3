#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "pivotmt/error.hpp"
#include "pivotmt/nmt/model.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt::nmt {

void to_json(nlohmann::json& j, const Hyperparams& hp);
void from_json(const nlohmann::json& j, Hyperparams& hp);
void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);

/// `epoch<TAB>mean_loss<TAB>lr`, one header line then one line per epoch.
std::string render_training_log(const std::vector<EpochStats>& history);

namespace detail {

inline constexpr char kMagic[8] = {'P', 'V', 'M', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

template <typename Scalar>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Scalar, double>) {
    return "float64";
  } else {
    static_assert(std::is_same_v<Scalar, float>, "checkpoints hold float or double");
    return "float32";
  }
}

template <typename T>
void append_raw(std::string& out, const T& value) {
  const char* bytes = reinterpret_cast<const char*>(&value);
  out.append(bytes, sizeof(T));
}

}  // namespace detail

// Layout: 8-byte magic, u32 version, u64 header length, JSON header
// (hyperparameters, languages, vocabularies, tensor shapes), then every
// tensor's coefficients in for_each_tensor order, column-major, native
// little-endian.
template <typename Scalar>
std::string serialize_checkpoint(const MsnmtModel<Scalar>& model) {
  nlohmann::json header;
  header["dtype"] = detail::dtype_name<Scalar>();
  header["hyperparams"] = model.hp;
  header["n_sources"] = model.n_sources();
  header["source_langs"] = model.source_langs;
  header["tgt_lang"] = model.tgt_lang;
  nlohmann::json vocabs = nlohmann::json::array();
  for (const auto& v : model.src_vocabs) vocabs.push_back(v.symbols());
  header["src_vocabs"] = vocabs;
  header["tgt_vocab"] = model.tgt_vocab.symbols();
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  for_each_tensor(model.params, [&](const std::string& name, const auto& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    payload.append(reinterpret_cast<const char*>(t.data()), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();
  std::string out(detail::kMagic, sizeof detail::kMagic);
  detail::append_raw(out, detail::kVersion);
  detail::append_raw(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

template <typename Scalar>
MsnmtModel<Scalar> deserialize_checkpoint(std::string_view bytes) {
  auto fail = [](const std::string& why) { return DataError("InvalidCheckpoint", why); };
  const std::size_t prefix = sizeof detail::kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < prefix || std::memcmp(bytes.data(), detail::kMagic, sizeof detail::kMagic) != 0) {
    throw fail("not a checkpoint");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 8, sizeof version);
  std::memcpy(&header_len, bytes.data() + 12, sizeof header_len);
  if (version != detail::kVersion) throw fail("unsupported version " + std::to_string(version));
  if (bytes.size() < prefix + header_len) throw fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  if (header.at("dtype") != detail::dtype_name<Scalar>()) {
    throw fail("checkpoint holds " + header.at("dtype").get<std::string>());
  }
  MsnmtModel<Scalar> model;
  model.hp = header.at("hyperparams").get<Hyperparams>();
  model.params = zero_parameters<Scalar>(model.hp, header.at("n_sources").get<std::size_t>());
  model.source_langs = header.at("source_langs").get<std::vector<std::string>>();
  model.tgt_lang = header.at("tgt_lang").get<std::string>();
  for (const auto& v : header.at("src_vocabs")) {
    auto symbols = v.get<std::vector<std::string>>();
    model.src_vocabs.emplace_back(std::vector<std::string>(symbols.begin() + 4, symbols.end()));
  }
  auto tgt = header.at("tgt_vocab").get<std::vector<std::string>>();
  model.tgt_vocab = Vocabulary(std::vector<std::string>(tgt.begin() + 4, tgt.end()));

  const auto& tensors = header.at("tensors");
  std::size_t index = 0;
  std::size_t offset = prefix + header_len;
  for_each_tensor(model.params, [&](const std::string& name, auto& t) {
    if (index >= tensors.size()) throw fail("missing tensor " + name);
    const auto& meta = tensors[index++];
    if (meta.at("name") != name || meta.at("rows") != t.rows() || meta.at("cols") != t.cols()) {
      throw fail("tensor " + name + " does not match the declared shape");
    }
    const std::size_t n = sizeof(Scalar) * static_cast<std::size_t>(t.size());
    if (offset + n > bytes.size()) throw fail("truncated tensor " + name);
    std::memcpy(t.data(), bytes.data() + offset, n);
    offset += n;
  });
  if (index != tensors.size() || offset != bytes.size()) throw fail("trailing data");
  return model;
}

template <typename Scalar>
void save_checkpoint(const MsnmtModel<Scalar>& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

template <typename Scalar = double>
MsnmtModel<Scalar> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<Scalar>(read_file(path));
}

}  // namespace pivotmt::nmt
