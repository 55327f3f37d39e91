#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dqps/protocol.hpp"

namespace dqps::wire {

// Frame layout (little-endian):
//   magic "DQPS" | version u8 = 1 | msg_type u8 | payload_len u32 | payload
inline constexpr std::uint8_t kMagic[4] = {'D', 'Q', 'P', 'S'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::uint32_t kMaxPayload = 16u * 1024u * 1024u;

enum class MsgType : std::uint8_t {
    SessionInit = 1,
    Detections = 2,
    BasisRevealBob = 3,
    BasisRevealAlice = 4,
    QberSample = 5,
    Report = 6,
    Terminate = 7,
};

enum class ErrorCode { BadMagic, BadVersion, BadLength, UnknownType, MalformedPayload };

const char* to_string(ErrorCode code);

class WireError : public std::runtime_error {
public:
    WireError(ErrorCode code, const std::string& detail);
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

enum class TerminateReason : std::uint32_t {
    Ok = 0,
    DigestMismatch = 1,
    ProtocolViolation = 2,
    Malformed = 3,
};

struct SessionInit {
    std::uint64_t digest = 0;
    std::uint64_t n_blocks = 0;
    bool operator==(const SessionInit&) const = default;
};

/// Bob's kept clicks; (block, slot) strictly increasing.
struct Detections {
    std::vector<SlotRef> slots;
    bool operator==(const Detections&) const = default;
};

/// One bit per block, 1 = check basis.
struct BasisRevealBob {
    std::vector<std::uint8_t> bases;
    bool operator==(const BasisRevealBob&) const = default;
};

struct BasisRevealAlice {
    std::vector<std::uint8_t> bases;
    bool operator==(const BasisRevealAlice&) const = default;
};

/// Positions in the sifted key (strictly increasing) and Alice's bits there.
struct QberSample {
    std::vector<std::uint32_t> indices;
    std::vector<std::uint8_t> bits;
    bool operator==(const QberSample&) const = default;
};

struct Report {
    SessionReport report;
    bool operator==(const Report&) const = default;
};

struct Terminate {
    std::uint32_t reason = 0;
    bool operator==(const Terminate&) const = default;
};

using Message = std::variant<SessionInit, Detections, BasisRevealBob, BasisRevealAlice, QberSample, Report, Terminate>;

MsgType type_of(const Message& message);
const char* name_of(MsgType type);

std::vector<std::uint8_t> encode(const Message& message);

/// Decode exactly one frame; the buffer must hold nothing else.
Message decode(std::span<const std::uint8_t> frame);

/// Non-throwing variant of decode.
std::variant<Message, ErrorCode> try_decode(std::span<const std::uint8_t> frame);

/// Reassembles messages from an arbitrarily chunked byte stream.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);
    /// Next complete message, if any. Throws WireError on a corrupt stream.
    std::optional<Message> next();
    std::size_t buffered() const { return buffer_.size() - offset_; }

private:
    std::vector<std::uint8_t> buffer_;
    std::size_t offset_ = 0;
};

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits);

/// Reliable ordered byte pipe between two endpoints.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(std::span<const std::uint8_t> bytes) = 0;
    /// Blocks up to `timeout` for at least one byte. Returns 0 on orderly close;
    /// throws ProtocolError(Timeout) when nothing arrives in time.
    virtual std::size_t receive(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
};

/// In-memory bidirectional pipe; `make_pipe` returns the two connected ends.
class MemoryTransport final : public Transport {
public:
    struct Channel;

    MemoryTransport(std::shared_ptr<Channel> inbound, std::shared_ptr<Channel> outbound);
    ~MemoryTransport() override;

    void send(std::span<const std::uint8_t> bytes) override;
    std::size_t receive(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override;
    void close() override;

private:
    std::shared_ptr<Channel> inbound_;
    std::shared_ptr<Channel> outbound_;
};

struct MemoryTransport::Channel {
    std::mutex mutex;
    std::condition_variable ready;
    std::deque<std::uint8_t> bytes;
    bool closed = false;
};

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe();

class TcpTransport final : public Transport {
public:
    explicit TcpTransport(int fd);
    ~TcpTransport() override;
    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    /// Connect to host:port, retrying until the timeout expires.
    static std::unique_ptr<TcpTransport> connect(const std::string& host, std::uint16_t port,
                                                 std::chrono::milliseconds timeout);

    void send(std::span<const std::uint8_t> bytes) override;
    std::size_t receive(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override;
    void close() override;

private:
    int fd_;
};

class TcpListener {
public:
    /// Bind and listen on host:port; port 0 picks an ephemeral port.
    TcpListener(const std::string& host, std::uint16_t port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::unique_ptr<TcpTransport> accept(std::chrono::milliseconds timeout);

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Raised for socket-level failures (bind, connect, broken pipe).
class TransportError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Message-level view of a transport.
class Channel {
public:
    Channel(Transport& transport, std::chrono::milliseconds timeout) : transport_(transport), timeout_(timeout) {}

    void send(const Message& message);
    Message receive();

private:
    Transport& transport_;
    std::chrono::milliseconds timeout_;
    FrameDecoder decoder_;
};

enum class Role { Alice, Bob };

/// Runs one endpoint of the sifting exchange:
///   A->B SESSION_INIT, B->A DETECTIONS, B->A BASIS_REVEAL_BOB,
///   A->B BASIS_REVEAL_ALICE, A->B QBER_SAMPLE, B->A REPORT, A->B TERMINATE.
/// Both endpoints return the same report, equal to run_local(config).
SessionReport run_session(Role role, Transport& transport, const SessionConfig& config,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));

}  // namespace dqps::wire
