#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cdupatch/detector_gateway.hpp"

namespace cdupatch {

using InProcessDetector = std::function<std::vector<Detection>(const Image&, Modality)>;

/// argv[0] is the executable; it is started once and kept alive for the handle's lifetime.
struct SubprocessCommand {
  std::vector<std::string> argv;
};

struct ExternalDescriptor {
  std::string id;
  Modality modality = Modality::kDual;
  std::variant<InProcessDetector, SubprocessCommand> target;
};

/// Wraps a black-box detector. The handle is never differentiable. A subprocess is probed
/// with a 1x1 request during registration; a failed probe throws ProtocolError.
DetectorHandle register_external(const ExternalDescriptor& descriptor);

/// Array-exchange protocol spoken over the subprocess's stdin/stdout.
///
/// Every message is a frame: u32 little-endian payload length, then the payload.
/// Request payload:  u8 version | u8 modality (0 visible, 1 infrared) | u32 height |
///                   u32 width | u32 channels | height*width*channels u8 pixels, row-major HWC
/// Response payload: u8 version | u32 count | count x (f32 x1, f32 y1, f32 x2, f32 y2,
///                   f32 score, i32 class)
/// All integers and floats little-endian.
namespace protocol {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kDetectionBytes = 24;

std::vector<std::uint8_t> encode_request(const Image& image, Modality branch);

struct Request {
  Modality modality = Modality::kVisible;
  Image image;  // values are byte/255
};
Request decode_request(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_response(std::span<const Detection> detections);
std::vector<Detection> decode_response(std::span<const std::uint8_t> payload);

/// Length prefix + payload.
std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload);

}  // namespace protocol

}  // namespace cdupatch
