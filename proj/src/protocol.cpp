// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "exptrial/error.hpp"

namespace exptrial {

namespace {

using nlohmann::json;

constexpr std::string_view kEngineTypes[] = {"HELLO",      "GET_TRIAL",
                                             "PUT_RESULT", "SKIP",
                                             "STATUS",     "BYE"};
constexpr std::string_view kManagerTypes[] = {"WELCOME", "TRIAL",
                                              "FINISHED", "OK",
                                              "STATUS_REPORT", "ERROR"};

bool is_engine_type(std::string_view type) {
  for (auto t : kEngineTypes) {
    if (t == type) return true;
  }
  return false;
}

bool is_known_type(std::string_view type) {
  if (is_engine_type(type)) return true;
  for (auto t : kManagerTypes) {
    if (t == type) return true;
  }
  return false;
}

}  // namespace

std::string encode_message(const Message& message) {
  json object = message.body.is_null() ? json::object() : message.body;
  if (!object.is_object()) {
    throw Error(ErrorCode::ProtocolError, "message body must be an object");
  }
  object["type"] = message.type;
  std::string line = object.dump();
  if (line.size() > kMaxLineBytes) {
    throw Error(ErrorCode::LineTooLong,
                "encoded message is " + std::to_string(line.size()) +
                    " bytes; limit is " + std::to_string(kMaxLineBytes));
  }
  return line;
}

Message decode_message(std::string_view line) {
  if (line.size() > kMaxLineBytes) {
    throw Error(ErrorCode::LineTooLong,
                "line is " + std::to_string(line.size()) +
                    " bytes; limit is " + std::to_string(kMaxLineBytes));
  }
  json object = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (object.is_discarded() || !object.is_object()) {
    throw Error(ErrorCode::ProtocolError, "line is not a JSON object");
  }
  const auto type_it = object.find("type");
  if (type_it == object.end() || !type_it->is_string()) {
    throw Error(ErrorCode::ProtocolError, "missing string field \"type\"");
  }
  Message message;
  message.type = type_it->get<std::string>();
  if (!is_known_type(message.type)) {
    throw Error(ErrorCode::ProtocolError,
                "unknown message type \"" + message.type + "\"");
  }
  object.erase("type");
  message.body = std::move(object);
  return message;
}

FdTransport::FdTransport(int in_fd, int out_fd, bool owns)
    : in_fd_(in_fd), out_fd_(out_fd), owns_(owns) {}

FdTransport::~FdTransport() {
  if (!owns_) return;
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0 && out_fd_ != in_fd_) ::close(out_fd_);
}

FdTransport::FdTransport(FdTransport&& other) noexcept
    : in_fd_(std::exchange(other.in_fd_, -1)),
      out_fd_(std::exchange(other.out_fd_, -1)),
      owns_(other.owns_),
      buffer_(std::move(other.buffer_)),
      eof_(other.eof_) {}

std::optional<std::string> FdTransport::read_line() {
  bool overlong = false;
  for (;;) {
    const auto lf = buffer_.find('\n');
    if (lf != std::string::npos) {
      std::string line = buffer_.substr(0, lf);
      buffer_.erase(0, lf + 1);
      if (overlong) {
        throw Error(ErrorCode::LineTooLong,
                    "request line exceeds " + std::to_string(kMaxLineBytes) +
                        " bytes");
      }
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (buffer_.size() > kMaxLineBytes) {
      // Drop the oversized prefix but keep scanning for the terminator so
      // the next read starts on a line boundary.
      buffer_.clear();
      overlong = true;
    }
    if (eof_) {
      if (buffer_.empty() || overlong) return std::nullopt;
      // Trailing bytes without a newline: the peer died mid-line.
      buffer_.clear();
      return std::nullopt;
    }
    char chunk[1 << 16];
    const ssize_t n = ::read(in_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportClosed{};
    }
    if (n == 0) {
      eof_ = true;
      continue;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void FdTransport::write_line(std::string_view line) {
  std::string framed(line);
  framed.push_back('\n');
  std::size_t off = 0;
  while (off < framed.size()) {
    const ssize_t n = ::write(out_fd_, framed.data() + off,
                              framed.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportClosed{};
    }
    off += static_cast<std::size_t>(n);
  }
}

SocketServer::SocketServer(std::uint16_t port) {
  ::signal(SIGPIPE, SIG_IGN);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) {
    throw Error(ErrorCode::StorageFailure,
                std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) !=
      0) {
    const std::string detail = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::StorageFailure,
                "bind 127.0.0.1:" + std::to_string(port) + ": " + detail);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 1) != 0) {
    const std::string detail = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::StorageFailure, "listen: " + detail);
  }
}

SocketServer::~SocketServer() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

FdTransport SocketServer::accept_one() {
  int conn;
  do {
    conn = ::accept(listen_fd_, nullptr, nullptr);
  } while (conn < 0 && errno == EINTR);
  const int saved = errno;
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (conn < 0) {
    throw Error(ErrorCode::StorageFailure,
                std::string("accept: ") + std::strerror(saved));
  }
  return FdTransport(conn, conn, /*owns=*/true);
}

namespace {

// Reply helper: echoes the request's "tag" verbatim when present.
void reply(Transport& transport, const json& request_body, Message response) {
  if (request_body.is_object()) {
    const auto tag = request_body.find("tag");
    if (tag != request_body.end()) response.body["tag"] = *tag;
  }
  transport.write_line(encode_message(response));
}

void reply_error(Transport& transport, const json& request_body,
                 std::string_view code, std::string_view message) {
  Message error{"ERROR", json::object()};
  error.body["code"] = std::string(code);
  error.body["message"] = std::string(message);
  reply(transport, request_body, std::move(error));
}

json status_body(const Session& session) {
  const SessionStatus st = session.status();
  json body = json::object();
  body["total"] = st.total;
  body["completed"] = st.completed;
  body["remaining"] = st.remaining;
  if (st.current_trial) body["current"] = *st.current_trial;
  return body;
}

}  // namespace

int serve(const SessionConfig& config, Transport& transport,
          std::ostream& diag) {
  ::signal(SIGPIPE, SIG_IGN);
  Session session = Session::begin(config);
  diag << "session " << session.session_id() << " on participant "
       << session.participant() << "\n";
  if (session.stolen_lock()) {
    diag << "note: stole stale lock from pid " << session.stolen_lock()->pid
         << " (session " << session.stolen_lock()->session_id << ")\n";
  }
  if (session.start_from_rewinds()) {
    if (session.auto_resume_trial()) {
      diag << "warning: --start-from precedes the automatic resume point "
              "(trial "
           << *session.auto_resume_trial()
           << "); completed trials will be re-run and overwritten\n";
    } else {
      diag << "warning: --start-from re-runs trials of a completed session; "
              "their outputs will be overwritten\n";
    }
  }

  bool greeted = false;
  try {
    for (;;) {
      std::optional<std::string> line;
      try {
        line = transport.read_line();
      } catch (const Error& e) {
        if (e.code() == ErrorCode::LineTooLong) {
          reply_error(transport, json(), code_name(e.code()), e.message());
          continue;
        }
        throw;
      }
      if (!line) {
        // Engine vanished without BYE: crash semantics. No SESSION_END; the
        // lock file stays and goes stale with this process.
        diag << "transport closed without BYE; session left resumable\n";
        session.abandon();
        return 0;
      }
      if (line->empty()) continue;  // tolerate keep-alive blank lines

      Message request;
      try {
        request = decode_message(*line);
      } catch (const Error& e) {
        reply_error(transport, json(), code_name(e.code()), e.message());
        continue;
      }

      if (!is_engine_type(request.type)) {
        reply_error(transport, request.body, "PROTOCOL_ERROR",
                    "\"" + request.type + "\" is a manager-direction type");
        continue;
      }

      if (!greeted) {
        if (request.type != "HELLO") {
          reply_error(transport, request.body, "NOT_READY",
                      "handshake required: send HELLO first");
          continue;
        }
        const auto version = request.body.find("protocol_version");
        if (version == request.body.end() ||
            !version->is_number_integer() ||
            version->get<std::int64_t>() != kProtocolVersion) {
          reply_error(transport, request.body, "UNSUPPORTED_VERSION",
                      "this manager speaks protocol version " +
                          std::to_string(kProtocolVersion));
          diag << "refused handshake: unsupported protocol version\n";
          session.end();
          return 2;
        }
        greeted = true;
        Message welcome{"WELCOME", json::object()};
        welcome.body["participant"] = session.participant();
        const SessionStatus st = session.status();
        welcome.body["total"] = st.total;
        welcome.body["completed"] = st.completed;
        if (st.current_trial) {
          welcome.body["resumed_at_trial"] = *st.current_trial;
        }
        reply(transport, request.body, std::move(welcome));
        continue;
      }

      if (request.type == "HELLO") {
        reply_error(transport, request.body, "PROTOCOL_ERROR",
                    "already greeted");
      } else if (request.type == "GET_TRIAL") {
        const auto current = session.current_trial();
        if (!current) {
          reply(transport, request.body, Message{"FINISHED", json::object()});
        } else {
          Message trial{"TRIAL", json::object()};
          trial.body["trial_number"] = current->trial_number;
          json inputs = json::object();
          for (const auto& [name, value] : current->inputs) {
            inputs[name] = value;
          }
          trial.body["inputs"] = std::move(inputs);
          reply(transport, request.body, std::move(trial));
        }
      } else if (request.type == "PUT_RESULT") {
        const auto outputs_it = request.body.find("outputs");
        if (outputs_it == request.body.end() || !outputs_it->is_object()) {
          reply_error(transport, request.body, "PROTOCOL_ERROR",
                      "PUT_RESULT requires an \"outputs\" object");
          continue;
        }
        const auto& columns = session.plan().schema.output_columns;
        std::vector<std::string> positional;
        std::string problem;
        for (const auto& name : columns) {
          const auto value = outputs_it->find(name);
          if (value == outputs_it->end()) {
            problem = "missing output \"" + name + "\"";
            break;
          }
          if (!value->is_string()) {
            problem = "output \"" + name + "\" must be a string";
            break;
          }
          positional.push_back(value->get<std::string>());
        }
        if (problem.empty() && outputs_it->size() != columns.size()) {
          for (const auto& [name, value] : outputs_it->items()) {
            (void)value;
            bool known = false;
            for (const auto& column : columns) {
              if (column == name) known = true;
            }
            if (!known) {
              problem = "unexpected output \"" + name + "\"";
              break;
            }
          }
        }
        if (!problem.empty()) {
          reply_error(transport, request.body, "OUTPUT_ARITY_MISMATCH",
                      problem);
          continue;
        }
        try {
          session.record_result(positional);
        } catch (const Error& e) {
          reply_error(transport, request.body, code_name(e.code()),
                      e.message());
          if (e.code() == ErrorCode::StorageFailure) {
            diag << "storage failure: " << e.message() << "\n";
            return 3;
          }
          continue;
        }
        reply(transport, request.body, Message{"OK", json::object()});
      } else if (request.type == "SKIP") {
        std::string reason;
        const auto reason_it = request.body.find("reason");
        if (reason_it != request.body.end() && reason_it->is_string()) {
          reason = reason_it->get<std::string>();
        }
        try {
          session.skip_trial(reason);
        } catch (const Error& e) {
          reply_error(transport, request.body, code_name(e.code()),
                      e.message());
          if (e.code() == ErrorCode::StorageFailure) {
            diag << "storage failure: " << e.message() << "\n";
            return 3;
          }
          continue;
        }
        reply(transport, request.body, Message{"OK", json::object()});
      } else if (request.type == "STATUS") {
        reply(transport, request.body,
              Message{"STATUS_REPORT", status_body(session)});
      } else if (request.type == "BYE") {
        try {
          session.end();
        } catch (const Error& e) {
          reply_error(transport, request.body, code_name(e.code()),
                      e.message());
          diag << "storage failure: " << e.message() << "\n";
          return 3;
        }
        reply(transport, request.body, Message{"OK", json::object()});
        diag << "session ended cleanly; " << session.completed_this_session()
             << " trial(s) recorded this session\n";
        return 0;
      }
    }
  } catch (const TransportClosed&) {
    diag << "transport closed without BYE; session left resumable\n";
    session.abandon();
    return 0;
  }
}

}  // namespace exptrial
