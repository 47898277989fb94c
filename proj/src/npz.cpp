#include "sdrf/npz.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "sdrf/errors.hpp"

namespace sdrf::npz {
namespace {

uint16_t rd16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | p[1] << 8); }
uint32_t rd32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}
void wr16(std::vector<unsigned char>& v, uint16_t x) {
  v.push_back(static_cast<unsigned char>(x));
  v.push_back(static_cast<unsigned char>(x >> 8));
}
void wr32(std::vector<unsigned char>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
}

std::vector<unsigned char> inflate_raw(const unsigned char* src, std::size_t n,
                                       std::size_t out_size) {
  std::vector<unsigned char> out(out_size);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw IoError("inflateInit failed");
  zs.next_in = const_cast<unsigned char*>(src);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("deflate stream corrupt in npz member");
  return out;
}

NpyArray parse_npy(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
    throw IoError("not an npy member");
  const int major = bytes[6];
  std::size_t header_len, header_off;
  if (major == 1) {
    header_len = rd16(bytes.data() + 8);
    header_off = 10;
  } else {
    header_len = rd32(bytes.data() + 8);
    header_off = 12;
  }
  if (bytes.size() < header_off + header_len) throw IoError("npy header truncated");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + header_off),
                           header_len);

  auto find_value = [&](const std::string& key) -> std::string {
    const auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos) throw IoError("npy header missing " + key);
    auto colon = header.find(':', kpos);
    auto start = header.find_first_not_of(" ", colon + 1);
    return header.substr(start);
  };

  NpyArray a;
  {
    std::string v = find_value("descr");  // like '<f4' or '|u1'
    const auto q1 = v.find('\'');
    const auto q2 = v.find('\'', q1 + 1);
    std::string descr = v.substr(q1 + 1, q2 - q1 - 1);
    if (descr.size() < 3) throw IoError("bad npy descr " + descr);
    const char order = descr[0];
    if (order == '>') throw IoError("big-endian npy not supported");
    a.kind = descr[1];
    a.item_size = std::stoi(descr.substr(2));
    if (a.kind != 'u' && a.kind != 'i' && a.kind != 'f' && a.kind != 'b')
      throw IoError("unsupported npy dtype kind " + descr);
  }
  {
    std::string v = find_value("fortran_order");
    if (v.rfind("True", 0) == 0) throw IoError("fortran-order npy not supported");
  }
  {
    std::string v = find_value("shape");
    const auto p1 = v.find('(');
    const auto p2 = v.find(')');
    std::string tup = v.substr(p1 + 1, p2 - p1 - 1);
    std::size_t pos = 0;
    while (pos < tup.size()) {
      while (pos < tup.size() && (tup[pos] == ' ' || tup[pos] == ',')) ++pos;
      if (pos >= tup.size()) break;
      a.shape.push_back(std::stoll(tup.substr(pos)));
      while (pos < tup.size() && tup[pos] != ',') ++pos;
    }
  }
  const std::size_t want =
      static_cast<std::size_t>(a.numel()) * static_cast<std::size_t>(a.item_size);
  if (bytes.size() - header_off - header_len < want) throw IoError("npy payload truncated");
  a.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_off + header_len),
                bytes.begin() + static_cast<std::ptrdiff_t>(header_off + header_len + want));
  return a;
}

}  // namespace

template <typename T>
T NpyArray::scalar_at(int64_t i) const {
  const unsigned char* p = data.data() + i * item_size;
  auto load = [&]() -> double {
    switch (kind) {
      case 'u':
      case 'b':
        switch (item_size) {
          case 1: return *p;
          case 2: return rd16(p);
          case 4: return rd32(p);
          case 8: {
            uint64_t v = 0;
            for (int b = 7; b >= 0; --b) v = v << 8 | p[b];
            return static_cast<double>(v);
          }
        }
        break;
      case 'i':
        switch (item_size) {
          case 1: return static_cast<int8_t>(*p);
          case 2: return static_cast<int16_t>(rd16(p));
          case 4: return static_cast<int32_t>(rd32(p));
          case 8: {
            uint64_t v = 0;
            for (int b = 7; b >= 0; --b) v = v << 8 | p[b];
            return static_cast<double>(static_cast<int64_t>(v));
          }
        }
        break;
      case 'f':
        if (item_size == 4) {
          float f;
          std::memcpy(&f, p, 4);
          return f;
        }
        if (item_size == 8) {
          double d;
          std::memcpy(&d, p, 8);
          return d;
        }
        break;
    }
    throw IoError("unsupported npy scalar access");
  };
  return static_cast<T>(load());
}
template float NpyArray::scalar_at<float>(int64_t) const;
template double NpyArray::scalar_at<double>(int64_t) const;
template int NpyArray::scalar_at<int>(int64_t) const;
template int64_t NpyArray::scalar_at<int64_t>(int64_t) const;

std::map<std::string, NpyArray> load_npz(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open npz: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 22) throw IoError("npz too small");

  // locate EOCD
  std::size_t eocd = std::string::npos;
  for (std::size_t i = buf.size() - 22; i + 1 > 0; --i) {
    if (rd32(buf.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
    if (buf.size() - i > 22 + 65535) break;
  }
  if (eocd == std::string::npos) throw IoError("zip end record not found");
  const uint16_t n_entries = rd16(buf.data() + eocd + 10);
  std::size_t cd = rd32(buf.data() + eocd + 16);

  std::map<std::string, NpyArray> out;
  for (uint16_t e = 0; e < n_entries; ++e) {
    if (rd32(buf.data() + cd) != 0x02014b50) throw IoError("zip central directory corrupt");
    const uint16_t method = rd16(buf.data() + cd + 10);
    const uint32_t csize = rd32(buf.data() + cd + 20);
    const uint32_t usize = rd32(buf.data() + cd + 24);
    const uint16_t name_len = rd16(buf.data() + cd + 28);
    const uint16_t extra_len = rd16(buf.data() + cd + 30);
    const uint16_t comment_len = rd16(buf.data() + cd + 32);
    const uint32_t local_off = rd32(buf.data() + cd + 42);
    std::string name(reinterpret_cast<const char*>(buf.data() + cd + 46), name_len);
    cd += 46u + name_len + extra_len + comment_len;

    if (rd32(buf.data() + local_off) != 0x04034b50) throw IoError("zip local header corrupt");
    const uint16_t lname = rd16(buf.data() + local_off + 26);
    const uint16_t lextra = rd16(buf.data() + local_off + 28);
    const unsigned char* payload = buf.data() + local_off + 30 + lname + lextra;

    std::vector<unsigned char> raw;
    if (method == 0)
      raw.assign(payload, payload + usize);
    else if (method == 8)
      raw = inflate_raw(payload, csize, usize);
    else
      throw IoError("unsupported zip method " + std::to_string(method));

    if (name.size() > 4 && name.substr(name.size() - 4) == ".npy")
      name = name.substr(0, name.size() - 4);
    out[name] = parse_npy(raw);
  }
  return out;
}

std::vector<unsigned char> encode_npy(const NpyArray& a) {
  std::string dict = "{'descr': '";
  dict += a.item_size == 1 ? '|' : '<';
  dict += a.kind;
  dict += std::to_string(a.item_size);
  dict += "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < a.shape.size(); ++i) {
    dict += std::to_string(a.shape[i]);
    if (a.shape.size() == 1 || i + 1 < a.shape.size()) dict += ",";
    if (i + 1 < a.shape.size()) dict += " ";
  }
  dict += "), }";
  while ((10 + dict.size() + 1) % 64 != 0) dict += ' ';
  dict += '\n';

  std::vector<unsigned char> out;
  const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.insert(out.end(), magic, magic + 8);
  wr16(out, static_cast<uint16_t>(dict.size()));
  out.insert(out.end(), dict.begin(), dict.end());
  out.insert(out.end(), a.data.begin(), a.data.end());
  return out;
}

void write_npz_stored(const std::filesystem::path& path,
                      const std::map<std::string, NpyArray>& arrays) {
  std::vector<unsigned char> file;
  struct CdEntry {
    std::string name;
    uint32_t crc, size, off;
  };
  std::vector<CdEntry> cds;
  for (const auto& [name, arr] : arrays) {
    const auto bytes = encode_npy(arr);
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
    const std::string fname = name + ".npy";
    cds.push_back({fname, crc, static_cast<uint32_t>(bytes.size()),
                   static_cast<uint32_t>(file.size())});
    wr32(file, 0x04034b50);
    wr16(file, 20);
    wr16(file, 0);
    wr16(file, 0);  // stored
    wr16(file, 0);
    wr16(file, 0);
    wr32(file, crc);
    wr32(file, static_cast<uint32_t>(bytes.size()));
    wr32(file, static_cast<uint32_t>(bytes.size()));
    wr16(file, static_cast<uint16_t>(fname.size()));
    wr16(file, 0);
    file.insert(file.end(), fname.begin(), fname.end());
    file.insert(file.end(), bytes.begin(), bytes.end());
  }
  const uint32_t cd_start = static_cast<uint32_t>(file.size());
  for (const auto& c : cds) {
    wr32(file, 0x02014b50);
    wr16(file, 20);
    wr16(file, 20);
    wr16(file, 0);
    wr16(file, 0);  // stored
    wr16(file, 0);
    wr16(file, 0);
    wr32(file, c.crc);
    wr32(file, c.size);
    wr32(file, c.size);
    wr16(file, static_cast<uint16_t>(c.name.size()));
    wr16(file, 0);
    wr16(file, 0);
    wr16(file, 0);
    wr16(file, 0);
    wr32(file, 0);
    wr32(file, c.off);
    file.insert(file.end(), c.name.begin(), c.name.end());
  }
  const uint32_t cd_size = static_cast<uint32_t>(file.size()) - cd_start;
  wr32(file, 0x06054b50);
  wr16(file, 0);
  wr16(file, 0);
  wr16(file, static_cast<uint16_t>(cds.size()));
  wr16(file, static_cast<uint16_t>(cds.size()));
  wr32(file, cd_size);
  wr32(file, cd_start);
  wr16(file, 0);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write npz: " + path.string());
  f.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
}

}  // namespace sdrf::npz
