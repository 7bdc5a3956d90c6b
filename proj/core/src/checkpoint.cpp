#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "adlab/policy.hpp"

namespace adlab {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "adlab-checkpoint";
constexpr int kFormatVersion = 1;

void write_le(std::ostream& os, const double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint64_t>(data[i]);
      char buf[8];
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      os.write(buf, 8);
    }
  }
}

void read_le(std::istream& is, double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      unsigned char buf[8];
      is.read(reinterpret_cast<char*>(buf), 8);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
      data[i] = std::bit_cast<double>(bits);
    }
  }
}

json config_to_json(const PolicyConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"context_len", c.context_len}, {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers}, {"num_heads", c.num_heads},     {"seed", c.seed}};
}

PolicyConfig config_from_json(const json& j) {
  PolicyConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.context_len = j.at("context_len").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, const Vocab* vocab) {
  json index = json::array();
  std::size_t offset = 0;
  params.tensors.for_each([&](const std::string& name, const auto& t) {
    index.push_back({{"name", name},
                     {"shape", {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())}},
                     {"offset", offset}});
    offset += static_cast<std::size_t>(t.size()) * sizeof(double);
  });
  json header = {{"format", kFormat},
                 {"format_version", kFormatVersion},
                 {"config", config_to_json(params.config)},
                 {"version", params.version},
                 {"tensors", index},
                 {"data_bytes", offset}};
  if (vocab) header["vocab"] = vocab->tokens();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot open checkpoint for writing: " + path.string());
  os << header.dump() << '\n';
  params.tensors.for_each([&](const std::string&, const auto& t) {
    write_le(os, t.data(), static_cast<std::size_t>(t.size()));
  });
  os.flush();
  if (!os) throw Error(Errc::IoError, "failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::IoError, "empty checkpoint: " + path.string());

  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("format", "") != kFormat) {
    throw Error(Errc::ParseError, "not an adlab checkpoint: " + path.string());
  }
  LoadedCheckpoint out;
  try {
    out.params.config = config_from_json(header.at("config"));
    out.params.version = header.at("version").get<std::uint64_t>();
    if (header.contains("vocab")) out.vocab_tokens = header["vocab"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad checkpoint header: ") + e.what());
  }
  out.params.config.validate();
  out.params.tensors = ParamTensors::zeros(out.params.config);

  const json& index = header.at("tensors");
  std::size_t i = 0;
  std::size_t offset = 0;
  out.params.tensors.for_each([&](const std::string& name, auto& t) {
    if (i >= index.size()) throw Error(Errc::ShapeMismatch, "checkpoint is missing tensor " + name);
    const json& entry = index[i++];
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (entry.at("name").get<std::string>() != name || shape.size() != 2 ||
        shape[0] != static_cast<std::size_t>(t.rows()) || shape[1] != static_cast<std::size_t>(t.cols()) ||
        entry.at("offset").get<std::size_t>() != offset) {
      throw Error(Errc::ShapeMismatch, "tensor " + name + " does not match the configured shape");
    }
    read_le(is, t.data(), static_cast<std::size_t>(t.size()));
    if (!is) throw Error(Errc::IoError, "truncated checkpoint data at tensor " + name);
    offset += static_cast<std::size_t>(t.size()) * sizeof(double);
  });
  if (i != index.size()) throw Error(Errc::ShapeMismatch, "checkpoint has unexpected extra tensors");
  return out;
}

}  // namespace adlab
