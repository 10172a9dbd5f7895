#include "pll/hashing.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "pll/data_model.hpp"

namespace pll {

namespace {

struct DigestCtx {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  DigestCtx() {
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1) {
      throw std::runtime_error("sha1: digest init failed");
    }
  }
  ~DigestCtx() { EVP_MD_CTX_free(ctx); }
  DigestCtx(const DigestCtx&) = delete;
  DigestCtx& operator=(const DigestCtx&) = delete;

  void update(std::string_view data) { EVP_DigestUpdate(ctx, data.data(), data.size()); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }
};

}  // namespace

std::string sha1_hex(std::string_view data) {
  DigestCtx d;
  d.update(data);
  return d.hex();
}

std::string git_blob_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  DigestCtx d;
  const std::string header = fmt::format("blob {}", content.size());
  d.update(header);
  d.update(std::string_view("\0", 1));
  d.update(content);
  return d.hex();
}

}  // namespace pll
