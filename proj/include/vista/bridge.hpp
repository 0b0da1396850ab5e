#pragma once

// Wire protocol for external denoisers.
//
// Every frame starts with a 17-byte header:
//   bytes 0..3   magic "VSTB"
//   byte  4      msg_type: 0 denoise_request, 1 denoise_response, 2 error, 3 handshake
//   bytes 5..16  u32 height, u32 width, u32 channels (little-endian)
// followed by
//   request/response: height*width*channels little-endian float32, planar order
//   error:            u32 length + UTF-8 message (dims are zero)
//   handshake:        nothing (dims are zero)
//
// The client sends a handshake and expects it echoed, then strictly
// alternates one request with one response.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vista/denoiser.hpp"
#include "vista/error.hpp"
#include "vista/image.hpp"
#include "vista/image_io.hpp"

namespace vista {

enum class FrameType : std::uint8_t {
  denoise_request = 0,
  denoise_response = 1,
  error = 2,
  handshake = 3,
};

inline constexpr std::size_t kFrameHeaderSize = 17;
inline constexpr std::uint64_t kMaxFrameSamples = std::uint64_t{1} << 28;
inline constexpr std::uint32_t kMaxErrorMessage = 1u << 20;

struct BridgeFrame {
  FrameType type = FrameType::handshake;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<float> payload;  // request/response only
  std::string message;         // error only

  friend bool operator==(const BridgeFrame&, const BridgeFrame&) = default;
};

inline BridgeFrame image_frame(FrameType type, const Image& x) {
  BridgeFrame f;
  f.type = type;
  f.height = static_cast<std::uint32_t>(x.height());
  f.width = static_cast<std::uint32_t>(x.width());
  f.channels = static_cast<std::uint32_t>(x.channels());
  f.payload.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) f.payload[i] = static_cast<float>(x[i]);
  return f;
}

inline BridgeFrame error_frame(std::string message) {
  BridgeFrame f;
  f.type = FrameType::error;
  f.message = std::move(message);
  return f;
}

inline Image frame_image(const BridgeFrame& f) {
  Image out(Dims{f.height, f.width, f.channels});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(f.payload[i]);
  return out;
}

inline std::vector<std::uint8_t> encode_frame(const BridgeFrame& f) {
  std::vector<std::uint8_t> out(kFrameHeaderSize);
  std::memcpy(out.data(), "VSTB", 4);
  out[4] = static_cast<std::uint8_t>(f.type);
  detail::put_u32_le(out.data() + 5, f.height);
  detail::put_u32_le(out.data() + 9, f.width);
  detail::put_u32_le(out.data() + 13, f.channels);
  switch (f.type) {
    case FrameType::denoise_request:
    case FrameType::denoise_response: {
      const std::uint64_t n = std::uint64_t{f.height} * f.width * f.channels;
      if (n != f.payload.size())
        throw BridgeError(BridgeError::Kind::malformed_frame, "frame payload does not match dims");
      out.resize(kFrameHeaderSize + 4 * f.payload.size());
      for (std::size_t i = 0; i < f.payload.size(); ++i)
        detail::put_u32_le(out.data() + kFrameHeaderSize + 4 * i,
                           std::bit_cast<std::uint32_t>(f.payload[i]));
      break;
    }
    case FrameType::error: {
      out.resize(kFrameHeaderSize + 4 + f.message.size());
      detail::put_u32_le(out.data() + kFrameHeaderSize, static_cast<std::uint32_t>(f.message.size()));
      std::memcpy(out.data() + kFrameHeaderSize + 4, f.message.data(), f.message.size());
      break;
    }
    case FrameType::handshake:
      break;
  }
  return out;
}

// Incremental decoder over a byte source: read(n) must return exactly n bytes
// or throw.
template <typename ReadExact>
BridgeFrame read_frame(ReadExact&& read) {
  const std::vector<std::uint8_t> head = read(kFrameHeaderSize);
  if (std::memcmp(head.data(), "VSTB", 4) != 0)
    throw BridgeError(BridgeError::Kind::malformed_frame, "bad frame magic");
  if (head[4] > 3)
    throw BridgeError(BridgeError::Kind::malformed_frame,
                      "unknown message type " + std::to_string(head[4]));
  BridgeFrame f;
  f.type = static_cast<FrameType>(head[4]);
  f.height = detail::get_u32_le(head.data() + 5);
  f.width = detail::get_u32_le(head.data() + 9);
  f.channels = detail::get_u32_le(head.data() + 13);
  switch (f.type) {
    case FrameType::denoise_request:
    case FrameType::denoise_response: {
      if (f.height == 0 || f.width == 0 || (f.channels != 1 && f.channels != 3))
        throw BridgeError(BridgeError::Kind::malformed_frame, "invalid frame dims");
      const std::uint64_t n = std::uint64_t{f.height} * f.width * f.channels;
      if (n > kMaxFrameSamples)
        throw BridgeError(BridgeError::Kind::malformed_frame, "frame too large");
      const std::vector<std::uint8_t> body = read(static_cast<std::size_t>(4 * n));
      f.payload.resize(static_cast<std::size_t>(n));
      for (std::size_t i = 0; i < f.payload.size(); ++i)
        f.payload[i] = std::bit_cast<float>(detail::get_u32_le(body.data() + 4 * i));
      break;
    }
    case FrameType::error: {
      const std::vector<std::uint8_t> len = read(4);
      const std::uint32_t n = detail::get_u32_le(len.data());
      if (n > kMaxErrorMessage)
        throw BridgeError(BridgeError::Kind::malformed_frame, "error message too long");
      const std::vector<std::uint8_t> msg = read(n);
      f.message.assign(msg.begin(), msg.end());
      break;
    }
    case FrameType::handshake:
      break;
  }
  return f;
}

// Decodes exactly one frame occupying the whole buffer.
inline BridgeFrame decode_frame(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  BridgeFrame f = read_frame([&](std::size_t n) {
    if (bytes.size() - pos < n) throw BridgeError(BridgeError::Kind::malformed_frame, "short read");
    std::vector<std::uint8_t> out(bytes.begin() + static_cast<long>(pos),
                                  bytes.begin() + static_cast<long>(pos + n));
    pos += n;
    return out;
  });
  if (pos != bytes.size())
    throw BridgeError(BridgeError::Kind::malformed_frame, "trailing bytes after frame");
  return f;
}

// Blocking I/O on a file descriptor pair with a per-operation deadline.
class FdChannel {
 public:
  FdChannel(int read_fd, int write_fd, std::chrono::milliseconds timeout)
      : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout) {}

  std::vector<std::uint8_t> read_exact(std::size_t n) const {
    std::vector<std::uint8_t> out(n);
    std::size_t got = 0;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (got < n) {
      wait(read_fd_, POLLIN, deadline);
      const ssize_t r = ::read(read_fd_, out.data() + got, n - got);
      if (r < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw BridgeError(BridgeError::Kind::transport, std::string("read: ") + std::strerror(errno));
      }
      if (r == 0)
        throw BridgeError(got == 0 && n == kFrameHeaderSize ? BridgeError::Kind::transport
                                                           : BridgeError::Kind::malformed_frame,
                          got == 0 ? "connection closed" : "short read");
      got += static_cast<std::size_t>(r);
    }
    return out;
  }

  void write_all(std::span<const std::uint8_t> bytes) const {
    std::size_t sent = 0;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (sent < bytes.size()) {
      wait(write_fd_, POLLOUT, deadline);
      const ssize_t w = ::write(write_fd_, bytes.data() + sent, bytes.size() - sent);
      if (w < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw BridgeError(BridgeError::Kind::transport, std::string("write: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(w);
    }
  }

  BridgeFrame read_frame() const {
    return vista::read_frame([this](std::size_t n) { return read_exact(n); });
  }
  void write_frame(const BridgeFrame& f) const { write_all(encode_frame(f)); }

 private:
  static void wait(int fd, short events, std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw BridgeError(BridgeError::Kind::timeout, "bridge timed out");
      pollfd pfd{fd, events, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc > 0) return;
      if (rc == 0) throw BridgeError(BridgeError::Kind::timeout, "bridge timed out");
      if (errno != EINTR)
        throw BridgeError(BridgeError::Kind::transport, std::string("poll: ") + std::strerror(errno));
    }
  }

  int read_fd_;
  int write_fd_;
  std::chrono::milliseconds timeout_;
};

struct SubprocessTransport {
  std::vector<std::string> argv;  // argv[0] resolved via PATH
};

struct TcpTransport {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

using Transport = std::variant<SubprocessTransport, TcpTransport>;

namespace detail {

inline void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

class BridgeConnection {
 public:
  BridgeConnection(const Transport& transport, std::chrono::milliseconds timeout)
      : timeout_(timeout) {
    ignore_sigpipe();
    if (const auto* sp = std::get_if<SubprocessTransport>(&transport))
      spawn(*sp);
    else
      connect_tcp(std::get<TcpTransport>(transport));
  }
  BridgeConnection(const BridgeConnection&) = delete;
  BridgeConnection& operator=(const BridgeConnection&) = delete;

  ~BridgeConnection() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_ > 0) reap();
  }

  FdChannel channel() const { return FdChannel(read_fd_, write_fd_, timeout_); }

 private:
  void spawn(const SubprocessTransport& sp) {
    if (sp.argv.empty()) throw BridgeError(BridgeError::Kind::transport, "empty bridge command");
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0)
      throw BridgeError(BridgeError::Kind::transport, "pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw BridgeError(BridgeError::Kind::transport, "pipe failed");
    }
    std::vector<char*> args;
    for (const auto& a : sp.argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) throw BridgeError(BridgeError::Kind::transport, "fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    child_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  void connect_tcp(const TcpTransport& tcp) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(tcp.port);
    if (::getaddrinfo(tcp.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw BridgeError(BridgeError::Kind::transport, "cannot resolve " + tcp.host);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0)
      throw BridgeError(BridgeError::Kind::transport,
                        "cannot connect to " + tcp.host + ":" + port);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    read_fd_ = write_fd_ = fd;
  }

  void reap() {
    // The child sees EOF on stdin once our write end is closed.
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(child_, nullptr, WNOHANG) == child_) return;
      ::usleep(10000);
    }
    ::kill(child_, SIGKILL);
    ::waitpid(child_, nullptr, 0);
  }

  std::chrono::milliseconds timeout_;
  pid_t child_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
};

}  // namespace detail

// A Denoiser served by an external process. The handshake happens here;
// every call then sends one request frame and blocks for the response.
inline Denoiser bridge_denoiser(const Transport& transport,
                                std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
  auto conn = std::make_shared<detail::BridgeConnection>(transport, timeout);
  {
    const FdChannel ch = conn->channel();
    BridgeFrame hello;
    hello.type = FrameType::handshake;
    ch.write_frame(hello);
    const BridgeFrame reply = ch.read_frame();
    if (reply.type == FrameType::error)
      throw BridgeError(BridgeError::Kind::server_error, "bridge handshake rejected: " + reply.message);
    if (reply.type != FrameType::handshake)
      throw BridgeError(BridgeError::Kind::malformed_frame, "bridge handshake not echoed");
  }
  std::string name = std::visit(
      [](const auto& t) -> std::string {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, SubprocessTransport>) {
          return "bridge(cmd=" + (t.argv.empty() ? std::string() : t.argv.front()) + ")";
        } else {
          return "bridge(tcp=" + t.host + ":" + std::to_string(t.port) + ")";
        }
      },
      transport);
  auto lock = std::make_shared<std::mutex>();
  return Denoiser(std::move(name), [conn, lock](const Image& x) {
    std::lock_guard guard(*lock);
    const FdChannel ch = conn->channel();
    ch.write_frame(image_frame(FrameType::denoise_request, x));
    const BridgeFrame reply = ch.read_frame();
    if (reply.type == FrameType::error)
      throw BridgeError(BridgeError::Kind::server_error, "bridge server error: " + reply.message);
    if (reply.type != FrameType::denoise_response)
      throw BridgeError(BridgeError::Kind::malformed_frame, "unexpected frame type from server");
    if (reply.height != x.height() || reply.width != x.width() || reply.channels != x.channels())
      throw BridgeError(BridgeError::Kind::dims_mismatch,
                        "bridge response dims " + std::to_string(reply.height) + "x" +
                            std::to_string(reply.width) + "x" + std::to_string(reply.channels) +
                            " differ from request " + x.dims().str());
    return frame_image(reply);
  });
}

}  // namespace vista
