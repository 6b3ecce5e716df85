#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "persig/oracle.hpp"

namespace persig {

// ---------------------------------------------------------------------------
// Equality-oracle wire protocol, bit-exact:
//   frame    = magic "PSO1" | opcode u8 | payload length u32le | payload
//   requests : 0x01 query (784 f32le), 0x02 batch (u32le count + count*784 f32le),
//              0x03 stats (empty)
//   responses: 0x81 (1 bool byte), 0x82 (count bool bytes), 0x83 (u64le queries,
//              u64le flips)
// Bool bytes are 0x00 / 0x01. A malformed frame closes the connection; the
// server keeps accepting. Each connection is its own oracle session.
// ---------------------------------------------------------------------------

namespace wire {

constexpr char kMagic[4] = {'P', 'S', 'O', '1'};
constexpr uint8_t kOpQuery = 0x01;
constexpr uint8_t kOpBatch = 0x02;
constexpr uint8_t kOpStats = 0x03;
constexpr uint8_t kOpRespBit = 0x80;
constexpr uint32_t kMaxPayload = 64u * 1024u * 1024u;
constexpr size_t kImageBytes = 784 * sizeof(float);

struct Frame {
    uint8_t opcode = 0;
    std::vector<uint8_t> payload;
};

inline bool read_exact(int fd, void* buf, size_t n) {
    uint8_t* p = static_cast<uint8_t*>(buf);
    size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, p + got, n - got, 0);
        if (r == 0) return false;
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        got += static_cast<size_t>(r);
    }
    return true;
}

inline bool write_all(int fd, const void* buf, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(buf);
    size_t sent = 0;
    while (sent < n) {
        ssize_t r = ::send(fd, p + sent, n - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<size_t>(r);
    }
    return true;
}

inline bool send_frame(int fd, uint8_t opcode, const uint8_t* payload, uint32_t len) {
    std::vector<uint8_t> buf(9 + len);
    std::memcpy(buf.data(), kMagic, 4);
    buf[4] = opcode;
    std::memcpy(buf.data() + 5, &len, 4);
    if (len) std::memcpy(buf.data() + 9, payload, len);
    return write_all(fd, buf.data(), buf.size());
}

// Errc::connection_lost on EOF, version_mismatch on "PSO" with another
// version byte, malformed_frame on anything else wrong.
inline Frame recv_frame(int fd) {
    uint8_t header[9];
    if (!read_exact(fd, header, sizeof(header)))
        throw Error(Errc::connection_lost, "while reading frame header");
    if (std::memcmp(header, kMagic, 4) != 0) {
        if (std::memcmp(header, kMagic, 3) == 0)
            throw Error(Errc::version_mismatch,
                        std::string("protocol version byte '") + static_cast<char>(header[3]) + "'");
        throw Error(Errc::malformed_frame, "bad magic");
    }
    Frame f;
    f.opcode = header[4];
    uint32_t len;
    std::memcpy(&len, header + 5, 4);
    if (len > kMaxPayload) throw Error(Errc::malformed_frame, "oversized payload");
    f.payload.resize(len);
    if (len && !read_exact(fd, f.payload.data(), len))
        throw Error(Errc::connection_lost, "while reading frame payload");
    return f;
}

inline Tensor payload_to_images(const uint8_t* data, size_t count) {
    Tensor t({static_cast<int>(count), 28, 28});
    std::memcpy(t.data.data(), data, count * kImageBytes);
    return t;
}

} // namespace wire

// Serves one model + one secret; every accepted connection runs its own
// session over the same pair. run() blocks; stop() unblocks it.
class OracleServer {
public:
    OracleServer(const ClassifierModel& model, Tensor secret, const std::string& host = "127.0.0.1",
                 uint16_t port = 0)
        : model_(model), secret_(std::move(secret)) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error(Errc::io_failure, "socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(listen_fd_);
            throw Error(Errc::bad_config, "cannot parse host " + host);
        }
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
            ::listen(listen_fd_, 16) < 0) {
            ::close(listen_fd_);
            throw Error(Errc::io_failure, "cannot listen on " + host + ":" + std::to_string(port));
        }
        sockaddr_in bound{};
        socklen_t len = sizeof(bound);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
        port_ = ntohs(bound.sin_port);
    }

    ~OracleServer() {
        stop();
        join_workers();
    }

    uint16_t port() const { return port_; }

    void run() {
        while (!stopping_.load()) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                break; // listener shut down
            }
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            {
                std::lock_guard<std::mutex> lock(mutex_);
                conn_fds_.push_back(fd);
                workers_.emplace_back([this, fd] { serve_connection(fd); });
            }
        }
    }

    std::thread run_async() {
        return std::thread([this] { run(); });
    }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        std::lock_guard<std::mutex> lock(mutex_);
        for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }

    void join_workers() {
        std::vector<std::thread> workers;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            workers.swap(workers_);
        }
        for (auto& t : workers)
            if (t.joinable()) t.join();
    }

private:
    void serve_connection(int fd) {
        OracleSession session(model_, secret_);
        try {
            while (true) {
                wire::Frame frame;
                try {
                    frame = wire::recv_frame(fd);
                } catch (const Error& e) {
                    break; // malformed or gone: drop the connection, keep serving
                }
                if (!handle_frame(fd, frame, session)) break;
            }
        } catch (...) {
        }
        ::close(fd);
        std::lock_guard<std::mutex> lock(mutex_);
        conn_fds_.erase(std::remove(conn_fds_.begin(), conn_fds_.end(), fd), conn_fds_.end());
    }

    bool handle_frame(int fd, const wire::Frame& frame, OracleSession& session) {
        switch (frame.opcode) {
            case wire::kOpQuery: {
                if (frame.payload.size() != wire::kImageBytes) return false;
                Tensor pert = wire::payload_to_images(frame.payload.data(), 1);
                bool equal;
                try {
                    equal = session.query_batch(pert)[0];
                } catch (const Error&) {
                    return false; // e.g. non-finite values from the client
                }
                uint8_t bit = equal ? 1 : 0;
                return wire::send_frame(fd, wire::kOpQuery | wire::kOpRespBit, &bit, 1);
            }
            case wire::kOpBatch: {
                if (frame.payload.size() < 4) return false;
                uint32_t count;
                std::memcpy(&count, frame.payload.data(), 4);
                if (count < 1 || frame.payload.size() != 4 + static_cast<size_t>(count) * wire::kImageBytes)
                    return false;
                Tensor perts = wire::payload_to_images(frame.payload.data() + 4, count);
                std::vector<bool> equal;
                try {
                    equal = session.query_batch(perts);
                } catch (const Error&) {
                    return false;
                }
                std::vector<uint8_t> bits(count);
                for (uint32_t i = 0; i < count; ++i) bits[i] = equal[i] ? 1 : 0;
                return wire::send_frame(fd, wire::kOpBatch | wire::kOpRespBit, bits.data(), count);
            }
            case wire::kOpStats: {
                if (!frame.payload.empty()) return false;
                OracleStats s = session.stats();
                uint8_t buf[16];
                std::memcpy(buf, &s.queries, 8);
                std::memcpy(buf + 8, &s.flips, 8);
                return wire::send_frame(fd, wire::kOpStats | wire::kOpRespBit, buf, 16);
            }
            default:
                return false; // unknown opcode: malformed
        }
    }

    const ClassifierModel& model_;
    Tensor secret_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex mutex_;
    std::vector<std::thread> workers_;
    std::vector<int> conn_fds_;
};

// Client side of the protocol. Exposes the same query surface as
// OracleSession, so extraction code runs unchanged across the boundary.
class RemoteOracle {
public:
    RemoteOracle(const std::string& host, uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw Error(Errc::io_failure, "socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd_);
            throw Error(Errc::bad_config, "cannot parse host " + host);
        }
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
            ::close(fd_);
            throw Error(Errc::connection_lost,
                        "cannot connect to " + host + ":" + std::to_string(port));
        }
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }

    ~RemoteOracle() {
        if (fd_ >= 0) ::close(fd_);
    }

    RemoteOracle(const RemoteOracle&) = delete;
    RemoteOracle& operator=(const RemoteOracle&) = delete;

    bool query(const Tensor& perturbation) {
        if (perturbation.shape != std::vector<int>{28, 28})
            throw Error(Errc::shape_mismatch, "perturbation must be (28,28)");
        send_or_throw(wire::kOpQuery, reinterpret_cast<const uint8_t*>(perturbation.data.data()),
                      static_cast<uint32_t>(wire::kImageBytes));
        wire::Frame resp = expect_response(wire::kOpQuery | wire::kOpRespBit);
        if (resp.payload.size() != 1) throw Error(Errc::malformed_frame, "query response length");
        return resp.payload[0] != 0;
    }

    std::vector<bool> query_batch(const Tensor& perturbations) {
        if (perturbations.shape.size() != 3 || perturbations.shape[1] != 28 ||
            perturbations.shape[2] != 28)
            throw Error(Errc::shape_mismatch, "expected (B,28,28)");
        const uint32_t count = static_cast<uint32_t>(perturbations.shape[0]);
        if (count < 1) throw Error(Errc::empty_batch, "query batch must hold >= 1 perturbation");
        std::vector<uint8_t> payload(4 + count * wire::kImageBytes);
        std::memcpy(payload.data(), &count, 4);
        std::memcpy(payload.data() + 4, perturbations.data.data(), count * wire::kImageBytes);
        send_or_throw(wire::kOpBatch, payload.data(), static_cast<uint32_t>(payload.size()));
        wire::Frame resp = expect_response(wire::kOpBatch | wire::kOpRespBit);
        if (resp.payload.size() != count)
            throw Error(Errc::malformed_frame, "batch response length");
        std::vector<bool> out(count);
        for (uint32_t i = 0; i < count; ++i) out[i] = resp.payload[i] != 0;
        return out;
    }

    OracleStats stats() {
        send_or_throw(wire::kOpStats, nullptr, 0);
        wire::Frame resp = expect_response(wire::kOpStats | wire::kOpRespBit);
        if (resp.payload.size() != 16) throw Error(Errc::malformed_frame, "stats response length");
        OracleStats s;
        std::memcpy(&s.queries, resp.payload.data(), 8);
        std::memcpy(&s.flips, resp.payload.data() + 8, 8);
        return s;
    }

    // test hook: push raw bytes at the server
    void send_raw(const std::vector<uint8_t>& bytes) {
        if (!wire::write_all(fd_, bytes.data(), bytes.size()))
            throw Error(Errc::connection_lost, "while sending raw bytes");
    }

    bool connection_alive() {
        uint8_t byte;
        ssize_t r = ::recv(fd_, &byte, 1, MSG_PEEK | MSG_DONTWAIT);
        if (r == 0) return false;                            // orderly close
        if (r < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return true;
        return r > 0;
    }

private:
    void send_or_throw(uint8_t opcode, const uint8_t* payload, uint32_t len) {
        if (!wire::send_frame(fd_, opcode, payload, len))
            throw Error(Errc::connection_lost, "while sending frame");
    }

    wire::Frame expect_response(uint8_t opcode) {
        wire::Frame f = wire::recv_frame(fd_);
        if (f.opcode != opcode)
            throw Error(Errc::malformed_frame,
                        "unexpected response opcode " + std::to_string(f.opcode));
        return f;
    }

    int fd_ = -1;
};

} // namespace persig
