#pragma once

// Minimal bridge server used to exercise the client side of the protocol.

#include <chrono>
#include <string>
#include <thread>

#include "vista/bridge.hpp"
#include "vista/denoiser.hpp"

namespace stub {

struct Options {
  std::string model = "identity";  // identity | gaussian | wrong_dims | error_once | garbage | hang
  double sigma = 1.0;
  long fail_after = -1;  // close the connection after this many requests
  bool echo_handshake = true;
};

// Serves one connection until EOF. Returns normally on a clean close.
inline void serve(const vista::FdChannel& ch, const Options& opt) {
  using namespace vista;
  const Denoiser gaussian = gaussian_smoother(opt.sigma);
  long served = 0;
  for (;;) {
    BridgeFrame in;
    try {
      in = ch.read_frame();
    } catch (const BridgeError& e) {
      if (e.kind() == BridgeError::Kind::malformed_frame) {
        try {
          ch.write_frame(error_frame(e.what()));
        } catch (const BridgeError&) {
        }
      }
      return;
    }
    if (in.type == FrameType::handshake) {
      if (!opt.echo_handshake) {
        ch.write_frame(error_frame("handshake refused"));
        return;
      }
      ch.write_frame(in);
      continue;
    }
    if (in.type != FrameType::denoise_request) {
      ch.write_frame(error_frame("expected a request frame"));
      continue;
    }
    if (opt.fail_after >= 0 && served >= opt.fail_after) return;
    ++served;
    if (opt.model == "identity") {
      BridgeFrame out = in;
      out.type = FrameType::denoise_response;
      ch.write_frame(out);
    } else if (opt.model == "gaussian") {
      ch.write_frame(image_frame(FrameType::denoise_response, gaussian(frame_image(in))));
    } else if (opt.model == "wrong_dims") {
      ch.write_frame(image_frame(FrameType::denoise_response, Image(in.height + 1, in.width, in.channels)));
    } else if (opt.model == "error_once") {
      if (served == 1) {
        ch.write_frame(error_frame("model failed on first request"));
      } else {
        BridgeFrame out = in;
        out.type = FrameType::denoise_response;
        ch.write_frame(out);
      }
    } else if (opt.model == "garbage") {
      const std::uint8_t junk[20] = {'N', 'O', 'P', 'E'};
      ch.write_all(junk);
    } else if (opt.model == "hang") {
      std::this_thread::sleep_for(std::chrono::seconds(30));
      return;
    } else {
      ch.write_frame(error_frame("unknown model " + opt.model));
    }
  }
}

}  // namespace stub
