// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented request/response protocol that lets any stimulus engine
// drive a session without linking this library: one JSON object per
// LF-terminated line, engine speaks first, every request gets exactly one
// reply. Full message catalogue and golden transcripts in docs/protocol.md.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "exptrial/session.hpp"

namespace exptrial {

inline constexpr std::int64_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxLineBytes = 1 << 20;  // hard per-line cap

/// One protocol message: its "type" plus every other field of the object.
/// The optional request "tag" rides in `body` and is echoed by replies.
struct Message {
  std::string type;
  nlohmann::json body = nlohmann::json::object();

  bool operator==(const Message&) const = default;
};

/// Serializes to one line (no terminator): the body object with "type"
/// merged in, keys in sorted order so identical messages are identical
/// bytes. Throws LINE_TOO_LONG past the cap.
std::string encode_message(const Message& message);

/// Parses one line (terminator already stripped). Unknown fields are kept
/// (forward compatibility); unknown "type" is rejected. Throws
/// PROTOCOL_ERROR, LINE_TOO_LONG.
Message decode_message(std::string_view line);

/// Thrown by transports when the peer vanished (EOF mid-line on write,
/// broken pipe). serve() maps it to the crash path: no SESSION_END, lock
/// left to liveness.
struct TransportClosed {};

class Transport {
 public:
  virtual ~Transport() = default;

  /// One line, LF (or CRLF) terminator stripped. nullopt on EOF at a line
  /// boundary. A line exceeding the cap is discarded through its LF and
  /// reported as LINE_TOO_LONG so the stream stays synchronized.
  virtual std::optional<std::string> read_line() = 0;

  /// Writes line + LF, flushed. Throws TransportClosed when the peer is
  /// gone.
  virtual void write_line(std::string_view line) = 0;
};

/// Transport over a pair of file descriptors (stdin/stdout, or one socket
/// fd passed as both ends).
class FdTransport : public Transport {
 public:
  /// Takes ownership of the fds when owns=true (a socket); never closes
  /// when owns=false (the process's std streams).
  FdTransport(int in_fd, int out_fd, bool owns);
  ~FdTransport() override;
  FdTransport(FdTransport&& other) noexcept;
  FdTransport& operator=(FdTransport&&) = delete;
  FdTransport(const FdTransport&) = delete;

  std::optional<std::string> read_line() override;
  void write_line(std::string_view line) override;

 private:
  int in_fd_;
  int out_fd_;
  bool owns_;
  std::string buffer_;
  bool eof_ = false;
};

/// Loopback-only listener. Accepts exactly one connection and then closes
/// the listening socket, so a second connection attempt during the session
/// is refused by the OS.
class SocketServer {
 public:
  /// Binds 127.0.0.1:port (port 0 picks an ephemeral one). Throws
  /// STORAGE_FAILURE on socket errors.
  explicit SocketServer(std::uint16_t port);
  ~SocketServer();
  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  std::uint16_t port() const { return port_; }

  /// Blocks for the one connection; closes the listener before returning.
  FdTransport accept_one();

 private:
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Runs a full session over the transport: HELLO/WELCOME handshake, then
/// GET_TRIAL / PUT_RESULT / SKIP / STATUS until BYE or EOF. Diagnostics go
/// to `diag` (never the transport). Returns the process exit status:
/// 0 clean (BYE, or EOF treated as engine crash), 2 version refusal,
/// 3 storage failure. Session setup errors (lock, validation) propagate as
/// exceptions for the caller's exit-code mapping.
int serve(const SessionConfig& config, Transport& transport,
          std::ostream& diag);

}  // namespace exptrial
