#include "hgnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace hgnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'H', 'G', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  os.write(b, 4);
}

uint32_t get_u32(std::istream& is) {
  char b[4];
  is.read(b, 4);
  uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}
}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  uint64_t offset = 0;
  for (const Param& p : store) {
    index[p.name] = {{"shape", p.shape}, {"offset", offset}};
    offset += p.values.size() * sizeof(double);
  }
  std::string js = index.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(js.size()));
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const Param& p : store)
    os.write(reinterpret_cast<const char*>(p.values.data()),
             static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  if (!os) throw DataError("short write to checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file (bad magic): " + path);
  uint32_t version = get_u32(is);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  uint32_t json_len = get_u32(is);
  std::string js(json_len, '\0');
  is.read(js.data(), json_len);
  if (!is) throw DataError("truncated checkpoint index: " + path);

  nlohmann::ordered_json index;
  try {
    index = nlohmann::ordered_json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint index: " + std::string(e.what()));
  }

  std::streampos payload_start = is.tellg();
  ParamStore store;
  for (auto it = index.begin(); it != index.end(); ++it) {
    Shape shape = it.value().at("shape").get<Shape>();
    uint64_t offset = it.value().at("offset").get<uint64_t>();
    Param& p = store.add(it.key(), shape);
    is.seekg(payload_start + static_cast<std::streamoff>(offset));
    is.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    if (!is)
      throw DataError("truncated checkpoint payload for " + it.key());
  }
  return store;
}

}  // namespace hgnn
