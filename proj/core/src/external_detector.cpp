#include "cdupatch/external_detector.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>

#include "cdupatch/errors.hpp"

namespace cdupatch {
namespace protocol {
namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ProtocolError("truncated payload");
  std::array<std::uint8_t, sizeof(T)> bytes;
  std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(pos), sizeof(T), bytes.begin());
  pos += sizeof(T);
  return std::bit_cast<T>(bytes);
}

std::uint8_t modality_code(Modality m) {
  if (m == Modality::kVisible) return 0;
  if (m == Modality::kInfrared) return 1;
  throw ParameterError("a request carries a single modality");
}

}  // namespace

std::vector<std::uint8_t> encode_request(const Image& image, Modality branch) {
  if (image.empty()) throw ShapeError("cannot encode an empty image");
  std::vector<std::uint8_t> out;
  out.reserve(14 + image.size());
  put<std::uint8_t>(out, kVersion);
  put<std::uint8_t>(out, modality_code(branch));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.channels));
  for (double v : image.data) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

Request decode_request(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  if (get<std::uint8_t>(payload, pos) != kVersion) throw ProtocolError("unsupported request version");
  const auto m = get<std::uint8_t>(payload, pos);
  if (m > 1) throw ProtocolError("bad modality code in request");
  const auto h = get<std::uint32_t>(payload, pos);
  const auto w = get<std::uint32_t>(payload, pos);
  const auto c = get<std::uint32_t>(payload, pos);
  if (h == 0 || w == 0 || (c != 1 && c != 3)) throw ProtocolError("bad image dimensions in request");
  if (payload.size() - pos != std::size_t(h) * w * c) throw ProtocolError("request pixel count does not match its header");
  Request r{m == 0 ? Modality::kVisible : Modality::kInfrared, Image(int(h), int(w), int(c))};
  for (std::size_t i = 0; i < r.image.size(); ++i) r.image.data[i] = payload[pos + i] / 255.0;
  return r;
}

std::vector<std::uint8_t> encode_response(std::span<const Detection> detections) {
  std::vector<std::uint8_t> out;
  put<std::uint8_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(detections.size()));
  for (const auto& d : detections) {
    put<float>(out, float(d.bbox.x1));
    put<float>(out, float(d.bbox.y1));
    put<float>(out, float(d.bbox.x2));
    put<float>(out, float(d.bbox.y2));
    put<float>(out, float(d.score));
    put<std::int32_t>(out, d.class_id);
  }
  return out;
}

std::vector<Detection> decode_response(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  if (get<std::uint8_t>(payload, pos) != kVersion) throw ProtocolError("unsupported response version");
  const auto n = get<std::uint32_t>(payload, pos);
  if (payload.size() - pos != std::size_t(n) * kDetectionBytes) {
    throw ProtocolError("response length does not match its detection count");
  }
  std::vector<Detection> dets(n);
  for (auto& d : dets) {
    d.bbox.x1 = get<float>(payload, pos);
    d.bbox.y1 = get<float>(payload, pos);
    d.bbox.x2 = get<float>(payload, pos);
    d.bbox.y2 = get<float>(payload, pos);
    d.score = get<float>(payload, pos);
    d.class_id = get<std::int32_t>(payload, pos);
    const bool finite = std::isfinite(d.bbox.x1) && std::isfinite(d.bbox.y1) && std::isfinite(d.bbox.x2) &&
                        std::isfinite(d.bbox.y2) && std::isfinite(d.score);
    if (!finite || !d.bbox.well_ordered()) throw ProtocolError("response contains a malformed box");
    if (!(d.score >= 0 && d.score <= 1)) throw ProtocolError("response score outside [0,1]");
  }
  return dets;
}

std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out(4 + payload.size());
  const auto len = std::bit_cast<std::array<std::uint8_t, 4>>(static_cast<std::uint32_t>(payload.size()));
  std::copy(len.begin(), len.end(), out.begin());
  std::copy(payload.begin(), payload.end(), out.begin() + 4);
  return out;
}

}  // namespace protocol

namespace {

constexpr int kReplyTimeoutMs = 60000;
constexpr std::uint32_t kMaxFrame = 64u << 20;

RawCandidates to_raw(const std::vector<Detection>& dets) {
  RawCandidates raw;
  for (const auto& d : dets) {
    raw.boxes.push_back(d.bbox);
    raw.scores.push_back(d.score);
    raw.class_ids.push_back(d.class_id);
  }
  return raw;
}

class InProcessBackend final : public DetectorBackend {
 public:
  InProcessBackend(InProcessDetector fn, Modality modality) : fn_(std::move(fn)), modality_(modality) {}
  RawCandidates raw_candidates(const Image& image, Modality branch) const override {
    if (modality_ != Modality::kDual && branch != modality_) throw CapabilityError("external detector does not serve this branch");
    return to_raw(fn_(image, branch));
  }

 private:
  InProcessDetector fn_;
  Modality modality_;
};

// One long-lived child process connected through a socket pair on its stdin and stdout.
class SubprocessBackend final : public DetectorBackend {
 public:
  explicit SubprocessBackend(const SubprocessCommand& cmd) {
    if (cmd.argv.empty()) throw ParameterError("subprocess detector needs a command");
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw IoError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    std::vector<char*> argv;
    for (const auto& a : cmd.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw IoError("fork failed");
    }
    if (pid_ == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
  }

  ~SubprocessBackend() override {
    if (fd_ >= 0) ::close(fd_);
    if (pid_ > 0) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, &status, 0);
      }
    }
  }

  SubprocessBackend(const SubprocessBackend&) = delete;
  SubprocessBackend& operator=(const SubprocessBackend&) = delete;

  RawCandidates raw_candidates(const Image& image, Modality branch) const override {
    return to_raw(exchange(image, branch));
  }

  std::vector<Detection> exchange(const Image& image, Modality branch) const {
    std::lock_guard lock(mutex_);
    const auto out = protocol::frame(protocol::encode_request(image, branch));
    send_all(out.data(), out.size());
    std::array<std::uint8_t, 4> len_bytes;
    recv_all(len_bytes.data(), 4);
    const auto len = std::bit_cast<std::uint32_t>(len_bytes);
    if (len > kMaxFrame) throw ProtocolError("external detector announced an oversized frame");
    std::vector<std::uint8_t> payload(len);
    recv_all(payload.data(), len);
    return protocol::decode_response(payload);
  }

 private:
  void send_all(const std::uint8_t* p, std::size_t n) const {
    while (n > 0) {
      const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) throw ProtocolError("external detector closed its input");
      p += k;
      n -= std::size_t(k);
    }
  }

  void recv_all(std::uint8_t* p, std::size_t n) const {
    while (n > 0) {
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, kReplyTimeoutMs);
      if (r < 0 && errno == EINTR) continue;
      if (r == 0) throw ProtocolError("external detector timed out");
      const ssize_t k = ::recv(fd_, p, n, 0);
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) throw ProtocolError("external detector closed its output mid-frame");
      p += k;
      n -= std::size_t(k);
    }
  }

  int fd_ = -1;
  pid_t pid_ = -1;
  mutable std::mutex mutex_;
};

}  // namespace

DetectorHandle register_external(const ExternalDescriptor& descriptor) {
  if (descriptor.id.empty()) throw ParameterError("external detector needs an id");
  DetectorHandle h;
  h.id = descriptor.id;
  h.differentiable = false;
  h.modality = descriptor.modality;
  if (const auto* fn = std::get_if<InProcessDetector>(&descriptor.target)) {
    if (!*fn) throw ParameterError("external detector callable is empty");
    h.backend = std::make_shared<InProcessBackend>(*fn, descriptor.modality);
  } else {
    auto backend = std::make_shared<SubprocessBackend>(std::get<SubprocessCommand>(descriptor.target));
    const Modality probe = descriptor.modality == Modality::kInfrared ? Modality::kInfrared : Modality::kVisible;
    backend->exchange(Image(1, 1, probe == Modality::kVisible ? 3 : 1), probe);
    h.backend = std::move(backend);
  }
  return h;
}

}  // namespace cdupatch
