#include "avatarforge/remote_denoiser.hpp"

#include <httplib.h>
#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <thread>

namespace avatarforge {

using nlohmann::json;

namespace wire {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DenoiserError("protocol: body is not a JSON object");
  return j;
}

const json& field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw DenoiserError(std::string("protocol: missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw DenoiserError(std::string("protocol: field '") + name + "' is not a string");
  return v.get<std::string>();
}

json latent_json(const LatentPayload& p) {
  std::vector<uint8_t> bytes(p.data.size() * 4);
  std::memcpy(bytes.data(), p.data.data(), bytes.size());
  return json{{"shape", {p.channels, p.height, p.width}}, {"dtype", "f32le"}, {"data", base64_encode(bytes)}};
}

LatentPayload latent_from_json(const json& j, const char* name) {
  const json& l = field(j, name);
  if (!l.is_object()) throw DenoiserError(std::string("protocol: '") + name + "' is not an object");
  if (string_field(l, "dtype") != "f32le") throw DenoiserError("protocol: unsupported dtype (expected f32le)");
  const json& shape = field(l, "shape");
  if (!shape.is_array() || shape.size() != 3) throw DenoiserError("protocol: latent shape must be [C, H, W]");
  for (const auto& d : shape)
    if (!d.is_number_integer() || d.get<int64_t>() <= 0 || d.get<int64_t>() > 1 << 16)
      throw DenoiserError("protocol: bad latent dimension");
  LatentPayload p;
  p.channels = shape[0].get<int>();
  p.height = shape[1].get<int>();
  p.width = shape[2].get<int>();
  const std::vector<uint8_t> bytes = base64_decode(string_field(l, "data"));
  const size_t count = static_cast<size_t>(p.channels) * p.height * p.width;
  if (bytes.size() != count * 4)
    throw DenoiserError("protocol: latent payload has " + std::to_string(bytes.size()) + " bytes, shape needs " +
                        std::to_string(count * 4));
  p.data.resize(count);
  std::memcpy(p.data.data(), bytes.data(), bytes.size());
  return p;
}

}  // namespace

static_assert(std::endian::native == std::endian::little, "wire payloads are copied as little-endian");

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  if (i < bytes.size()) {
    const bool two = i + 1 < bytes.size();
    const uint32_t v = (bytes[i] << 16) | (two ? bytes[i + 1] << 8 : 0);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += two ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  static const std::array<int8_t, 256> lookup = [] {
    std::array<int8_t, 256> t;
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<uint8_t>(kAlphabet[i])] = static_cast<int8_t>(i);
    return t;
  }();
  if (text.size() % 4 != 0) throw DenoiserError("base64: length is not a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    const int pad = last ? (text[i + 3] == '=') + (text[i + 2] == '=') : 0;
    if (pad == 1 && text[i + 2] == '=') throw DenoiserError("base64: bad padding");
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      const int d = k >= 4 - pad ? 0 : lookup[static_cast<uint8_t>(text[i + k])];
      if (d < 0) throw DenoiserError("base64: invalid character");
      v = (v << 6) | static_cast<uint32_t>(d);
    }
    out.push_back(static_cast<uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<uint8_t>(v));
  }
  return out;
}

LatentPayload to_payload(const Latent& latent, int width, int height) {
  if (latent.cols() != static_cast<Eigen::Index>(width) * height) throw InputError("latent does not match its size");
  LatentPayload p;
  p.channels = static_cast<int>(latent.rows());
  p.height = height;
  p.width = width;
  p.data.resize(latent.size());
  for (int c = 0; c < p.channels; ++c)
    for (Eigen::Index q = 0; q < latent.cols(); ++q) p.data[c * latent.cols() + q] = static_cast<float>(latent(c, q));
  return p;
}

Latent from_payload(const LatentPayload& p) {
  if (p.channels != 4) throw DenoiserError("protocol: expected 4 latent channels, got " + std::to_string(p.channels));
  const Eigen::Index n = static_cast<Eigen::Index>(p.height) * p.width;
  Latent out(4, n);
  for (int c = 0; c < 4; ++c)
    for (Eigen::Index q = 0; q < n; ++q) out(c, q) = p.data[c * n + q];
  return out;
}

std::string health_response(const std::string& model) { return json{{"model", model}}.dump(); }
std::string embed_request(const std::string& prompt) { return json{{"prompt", prompt}}.dump(); }
std::string embed_response(const std::string& prompt_id) { return json{{"prompt_id", prompt_id}}.dump(); }

std::string denoise_request(const std::string& prompt_id, ViewTag view, int t, double guidance_scale,
                            const LatentPayload& latent) {
  return json{{"prompt_id", prompt_id},
              {"view_tag", to_string(view)},
              {"t", t},
              {"guidance_scale", guidance_scale},
              {"latent", latent_json(latent)}}
      .dump();
}

std::string denoise_response(const LatentPayload& eps) { return json{{"eps", latent_json(eps)}}.dump(); }
std::string decode_request(const LatentPayload& latent) { return json{{"latent", latent_json(latent)}}.dump(); }
std::string decode_response(const std::vector<uint8_t>& png) { return json{{"png", base64_encode(png)}}.dump(); }

std::string parse_health_response(const std::string& body) { return string_field(parse_body(body), "model"); }
std::string parse_embed_request(const std::string& body) { return string_field(parse_body(body), "prompt"); }
std::string parse_embed_response(const std::string& body) { return string_field(parse_body(body), "prompt_id"); }

DenoiseRequest parse_denoise_request(const std::string& body) {
  const json j = parse_body(body);
  DenoiseRequest r;
  r.prompt_id = string_field(j, "prompt_id");
  r.view_tag = string_field(j, "view_tag");
  const json& t = field(j, "t");
  const json& g = field(j, "guidance_scale");
  if (!t.is_number_integer()) throw DenoiserError("protocol: field 't' is not an integer");
  if (!g.is_number()) throw DenoiserError("protocol: field 'guidance_scale' is not a number");
  r.t = t.get<int>();
  r.guidance_scale = g.get<double>();
  r.latent = latent_from_json(j, "latent");
  return r;
}

LatentPayload parse_denoise_response(const std::string& body) { return latent_from_json(parse_body(body), "eps"); }
LatentPayload parse_decode_request(const std::string& body) { return latent_from_json(parse_body(body), "latent"); }
std::vector<uint8_t> parse_decode_response(const std::string& body) {
  return base64_decode(string_field(parse_body(body), "png"));
}

}  // namespace wire

struct RemoteDenoiser::Transport {
  explicit Transport(const RemoteConfig& c) : client(c.url) {
    client.set_connection_timeout(c.connect_timeout);
    client.set_read_timeout(c.read_timeout);
    client.set_write_timeout(c.read_timeout);
  }
  httplib::Client client;
};

RemoteDenoiser::RemoteDenoiser(RemoteConfig config) : config_(std::move(config)) {
  if (config_.attempts < 1) throw InputError("remote denoiser needs at least one attempt");
  transport_ = std::make_unique<Transport>(config_);
  if (!transport_->client.is_valid()) throw InputError("invalid denoiser URL '" + config_.url + "'");
}

RemoteDenoiser::~RemoteDenoiser() = default;

std::string RemoteDenoiser::call(const std::string& method, const std::string& path, const std::string& body) {
  std::string last;
  auto delay = config_.backoff;
  int made = 0;
  for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
    made = attempt;
    httplib::Result res = method == "GET" ? transport_->client.Get(path)
                                          : transport_->client.Post(path, body, "application/json");
    if (!res) {
      last = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      return res->body;
    } else {
      last = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      // Client errors are not transient.
      if (res->status >= 400 && res->status < 500 && res->status != 408 && res->status != 429) break;
    }
    if (attempt < config_.attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw DenoiserError(method + " " + config_.url + path + " failed after " + std::to_string(made) +
                      (made == 1 ? " attempt: " : " attempts: ") + last);
}

std::string RemoteDenoiser::health() { return wire::parse_health_response(call("GET", "/health", "")); }

std::string RemoteDenoiser::embed(const std::string& prompt) {
  const auto it = prompt_ids_.find(prompt);
  if (it != prompt_ids_.end()) return it->second;
  const std::string id = wire::parse_embed_response(call("POST", "/embed", wire::embed_request(prompt)));
  prompt_ids_.emplace(prompt, id);
  return id;
}

Latent RemoteDenoiser::predict_noise(const GuidanceRequest& request) {
  const std::string id = embed(view_prompt(request.prompt, request.view));
  const wire::LatentPayload sent = wire::to_payload(request.noisy, request.width, request.height);
  const wire::LatentPayload eps = wire::parse_denoise_response(
      call("POST", "/denoise", wire::denoise_request(id, request.view, request.t, request.guidance_scale, sent)));
  if (eps.channels != sent.channels || eps.height != sent.height || eps.width != sent.width)
    throw DenoiserError("denoise reply shape [" + std::to_string(eps.channels) + "," + std::to_string(eps.height) + "," +
                        std::to_string(eps.width) + "] differs from the request");
  return wire::from_payload(eps);
}

std::vector<uint8_t> RemoteDenoiser::decode(const Latent& latent, int width, int height) {
  return wire::parse_decode_response(call("POST", "/decode", wire::decode_request(wire::to_payload(latent, width, height))));
}

}  // namespace avatarforge
