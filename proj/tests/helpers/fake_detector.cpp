// Stand-in external detector for protocol tests.
//   fake_detector echo       one box over the left half of every image, score 0.9
//   fake_detector bad-version  replies with an unknown protocol version
//   fake_detector short        announces more bytes than it sends, then exits
//   fake_detector exit         exits without replying

#include <unistd.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "cdupatch/external_detector.hpp"

namespace {

bool read_all(void* dst, std::size_t n) {
  auto* p = static_cast<std::uint8_t*>(dst);
  while (n > 0) {
    const ssize_t k = ::read(STDIN_FILENO, p, n);
    if (k <= 0) return false;
    p += k;
    n -= std::size_t(k);
  }
  return true;
}

void write_all(const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t k = ::write(STDOUT_FILENO, bytes.data() + off, bytes.size() - off);
    if (k <= 0) return;
    off += std::size_t(k);
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cdupatch;
  const std::string mode = argc > 1 ? argv[1] : "echo";
  while (true) {
    std::uint32_t len = 0;
    if (!read_all(&len, 4)) return 0;
    std::vector<std::uint8_t> payload(len);
    if (!read_all(payload.data(), len)) return 1;
    if (mode == "exit") return 0;
    if (mode == "short") {
      write_all({100, 0, 0, 0, protocol::kVersion});
      return 0;
    }
    const auto req = protocol::decode_request(payload);
    std::vector<Detection> dets;
    dets.push_back({{0.0, 0.0, req.image.width / 2.0, double(req.image.height)}, 0.9, 0});
    auto body = protocol::encode_response(dets);
    if (mode == "bad-version") body[0] = protocol::kVersion + 7;
    write_all(protocol::frame(body));
  }
}
