#pragma once

#include "avatarforge/guidance.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace avatarforge {

// Guidance wire protocol: JSON bodies, float payloads as base64 of
// little-endian f32 in channel-major [C, H, W] order.
namespace wire {

std::string base64_encode(const std::vector<uint8_t>& bytes);
// Throws DenoiserError on characters outside the standard alphabet or bad padding.
std::vector<uint8_t> base64_decode(const std::string& text);

struct LatentPayload {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;  // [C, H, W]
};
// Pixel-major latent (4 × H·W) to payload, rounding to f32.
LatentPayload to_payload(const Latent& latent, int width, int height);
Latent from_payload(const LatentPayload& payload);

// Request bodies, serialized with sorted keys and no whitespace.
std::string health_response(const std::string& model);
std::string embed_request(const std::string& prompt);
std::string embed_response(const std::string& prompt_id);
std::string denoise_request(const std::string& prompt_id, ViewTag view, int t, double guidance_scale,
                            const LatentPayload& latent);
std::string denoise_response(const LatentPayload& eps);
std::string decode_request(const LatentPayload& latent);
std::string decode_response(const std::vector<uint8_t>& png);

// Parsers; DenoiserError names the offending field.
std::string parse_health_response(const std::string& body);
std::string parse_embed_request(const std::string& body);
std::string parse_embed_response(const std::string& body);
struct DenoiseRequest {
  std::string prompt_id;
  std::string view_tag;
  int t = 0;
  double guidance_scale = 0.0;
  LatentPayload latent;
};
DenoiseRequest parse_denoise_request(const std::string& body);
LatentPayload parse_denoise_response(const std::string& body);
LatentPayload parse_decode_request(const std::string& body);
std::vector<uint8_t> parse_decode_response(const std::string& body);

}  // namespace wire

struct RemoteConfig {
  std::string url = "http://127.0.0.1:8765";
  int attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{120000};
};

// Client for a denoiser bridge. Prompts are view-augmented and embedded
// once per distinct text.
class RemoteDenoiser : public Denoiser {
 public:
  explicit RemoteDenoiser(RemoteConfig config);
  ~RemoteDenoiser() override;

  std::string health();
  std::string embed(const std::string& prompt);
  Latent predict_noise(const GuidanceRequest& request) override;
  std::vector<uint8_t> decode(const Latent& latent, int width, int height);
  std::string name() const override { return "remote"; }

 private:
  struct Transport;
  std::string call(const std::string& method, const std::string& path, const std::string& body);

  RemoteConfig config_;
  std::unique_ptr<Transport> transport_;
  std::map<std::string, std::string> prompt_ids_;
};

}  // namespace avatarforge
