#include <gtest/gtest.h>

#include "cdupatch/errors.hpp"
#include "cdupatch/external_detector.hpp"
#include "test_support.hpp"

namespace cdupatch {
namespace {

ExternalDescriptor subprocess(const std::string& mode) {
  ExternalDescriptor d;
  d.id = "fake-" + mode;
  d.target = SubprocessCommand{{CDUPATCH_FAKE_DETECTOR, mode}};
  return d;
}

TEST(Protocol, RequestRoundTripQuantisesToBytes) {
  Image img(2, 3, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = double(i) / 17.0;
  const auto payload = protocol::encode_request(img, Modality::kInfrared);
  EXPECT_EQ(payload.size(), 1 + 1 + 12 + img.size());
  const auto req = protocol::decode_request(payload);
  EXPECT_EQ(req.modality, Modality::kInfrared);
  ASSERT_TRUE(req.image.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(req.image.data[i], img.data[i], 0.5 / 255 + 1e-12);
}

TEST(Protocol, ResponseRoundTrip) {
  const std::vector<Detection> dets{{{1.5, 2.0, 10.25, 8.0}, 0.75, 0}, {{0, 0, 4, 4}, 0.5, 3}};
  const auto back = protocol::decode_response(protocol::encode_response(dets));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].bbox, dets[0].bbox);
  EXPECT_FLOAT_EQ(float(back[0].score), 0.75f);
  EXPECT_EQ(back[1].class_id, 3);
}

TEST(Protocol, FrameHasLittleEndianLength) {
  const std::vector<std::uint8_t> body{9, 8, 7};
  const auto f = protocol::frame(body);
  EXPECT_EQ(f, (std::vector<std::uint8_t>{3, 0, 0, 0, 9, 8, 7}));
}

TEST(Protocol, RejectsMalformedPayloads) {
  EXPECT_THROW(protocol::decode_response(std::vector<std::uint8_t>{protocol::kVersion, 1, 0, 0, 0}),
               ProtocolError);
  EXPECT_THROW(protocol::decode_response(std::vector<std::uint8_t>{9, 0, 0, 0, 0}), ProtocolError);
  EXPECT_THROW(protocol::decode_request(std::vector<std::uint8_t>{protocol::kVersion, 0, 1}), ProtocolError);
}

TEST(InProcess, WrapsCallable) {
  ExternalDescriptor d;
  d.id = "lambda";
  int calls = 0;
  d.target = InProcessDetector([&](const Image& img, Modality m) {
    ++calls;
    const double s = m == Modality::kVisible ? 0.8 : 0.3;
    return std::vector<Detection>{{{0, 0, double(img.width), double(img.height)}, s, 0}};
  });
  const auto h = register_external(d);
  EXPECT_FALSE(h.differentiable);
  const auto r = detect(h, Image(4, 4, 3), Image(4, 4, 1), {0.5, 0.5});
  EXPECT_EQ(r.visible.size(), 1u);
  EXPECT_TRUE(r.infrared.empty());
  EXPECT_EQ(r.raw_infrared.size(), 1u);
  EXPECT_GE(calls, 2);
}

TEST(Subprocess, EchoDetectorAnswersEveryRequest) {
  const auto h = register_external(subprocess("echo"));
  for (int i = 0; i < 3; ++i) {
    const auto r = detect(h, testing::random_image(6, 10, 3, i), testing::random_image(6, 10, 1, i + 9));
    ASSERT_EQ(r.visible.size(), 1u);
    EXPECT_EQ(r.visible[0].bbox, (Box{0, 0, 5, 6}));
    EXPECT_NEAR(r.visible[0].score, 0.9, 1e-6);
    EXPECT_EQ(r.infrared.size(), 1u);
  }
}

TEST(Subprocess, BadVersionIsProtocolError) {
  EXPECT_THROW(register_external(subprocess("bad-version")), ProtocolError);
}

TEST(Subprocess, TruncatedReplyIsProtocolError) {
  EXPECT_THROW(register_external(subprocess("short")), ProtocolError);
}

TEST(Subprocess, EarlyExitIsProtocolError) {
  EXPECT_THROW(register_external(subprocess("exit")), ProtocolError);
}

TEST(Subprocess, MissingExecutableIsProtocolError) {
  ExternalDescriptor d;
  d.id = "nowhere";
  d.target = SubprocessCommand{{"/nonexistent/detector-binary"}};
  EXPECT_THROW(register_external(d), ProtocolError);
}

}  // namespace
}  // namespace cdupatch
