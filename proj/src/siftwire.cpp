#include "dqps/siftwire.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <thread>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace dqps::wire {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BAD_MAGIC";
        case ErrorCode::BadVersion: return "BAD_VERSION";
        case ErrorCode::BadLength: return "BAD_LENGTH";
        case ErrorCode::UnknownType: return "UNKNOWN_TYPE";
        case ErrorCode::MalformedPayload: return "MALFORMED_PAYLOAD";
    }
    return "UNKNOWN";
}

WireError::WireError(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

namespace {

[[noreturn]] void malformed(const std::string& detail) { throw WireError(ErrorCode::MalformedPayload, detail); }

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t remaining() const { return data_.size() - pos_; }
    void finish() const {
        if (remaining() != 0) malformed(std::to_string(remaining()) + " trailing bytes in payload");
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) malformed("payload truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

void write_bit_vector(Writer& w, std::span<const std::uint8_t> bits) {
    if (bits.size() > 0xffffffffULL) malformed("bit vector too long");
    w.u32(static_cast<std::uint32_t>(bits.size()));
    w.bytes(pack_bits(bits));
}

std::vector<std::uint8_t> read_packed(Reader& r, std::uint32_t count) {
    const std::size_t n_bytes = (static_cast<std::size_t>(count) + 7) / 8;
    auto packed = r.bytes(n_bytes);
    std::vector<std::uint8_t> bits(count);
    for (std::uint32_t i = 0; i < count; ++i) bits[i] = (packed[i / 8] >> (i % 8)) & 1u;
    if (count % 8 != 0 && (packed.back() >> (count % 8)) != 0) malformed("non-zero padding bits");
    return bits;
}

std::vector<std::uint8_t> read_bit_vector(Reader& r) { return read_packed(r, r.u32()); }

void check_increasing(std::span<const SlotRef> slots) {
    for (std::size_t i = 1; i < slots.size(); ++i) {
        if (!(slots[i - 1] < slots[i])) malformed("detections not strictly increasing");
    }
}

void check_increasing(std::span<const std::uint32_t> indices) {
    for (std::size_t i = 1; i < indices.size(); ++i) {
        if (indices[i - 1] >= indices[i]) malformed("sample indices not strictly increasing");
    }
}

void write_report(Writer& w, const SessionReport& r) {
    w.u64(r.blocks_sent);
    w.u64(r.slots_offered);
    w.u64(r.clicks);
    w.u64(r.kept_events);
    w.f64(r.p_click);
    w.f64(r.q_gain_estimate);
    w.u64(r.sifted_bits_alice);
    w.u64(r.sifted_bits_bob);
    w.u64(r.sample.z_bits);
    w.u64(r.sample.z_errors);
    w.u64(r.sample.x_bits);
    w.u64(r.sample.x_errors);
    w.f64(r.qber_z);
    w.f64(r.qber_x);
    const auto& b = r.breakdown;
    for (double v : {b.q_gain, b.e0, b.e1, b.r_tag, b.f_pa, b.f_ec, b.secure_rate, b.raw_rate}) w.f64(v);
    w.u8(r.no_key ? 1 : 0);
}

SessionReport read_report(Reader& rd) {
    SessionReport r;
    r.blocks_sent = rd.u64();
    r.slots_offered = rd.u64();
    r.clicks = rd.u64();
    r.kept_events = rd.u64();
    r.p_click = rd.f64();
    r.q_gain_estimate = rd.f64();
    r.sifted_bits_alice = rd.u64();
    r.sifted_bits_bob = rd.u64();
    r.sample.z_bits = rd.u64();
    r.sample.z_errors = rd.u64();
    r.sample.x_bits = rd.u64();
    r.sample.x_errors = rd.u64();
    r.qber_z = rd.f64();
    r.qber_x = rd.f64();
    auto& b = r.breakdown;
    for (double* v : {&b.q_gain, &b.e0, &b.e1, &b.r_tag, &b.f_pa, &b.f_ec, &b.secure_rate, &b.raw_rate}) *v = rd.f64();
    const std::uint8_t flag = rd.u8();
    if (flag > 1) malformed("no_key flag must be 0 or 1");
    r.no_key = flag == 1;
    return r;
}

std::vector<std::uint8_t> encode_payload(const Message& message) {
    Writer w;
    std::visit(
        [&w](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SessionInit>) {
                w.u64(m.digest);
                w.u64(m.n_blocks);
            } else if constexpr (std::is_same_v<T, Detections>) {
                check_increasing(m.slots);
                w.u32(static_cast<std::uint32_t>(m.slots.size()));
                for (const auto& s : m.slots) {
                    w.u32(s.block);
                    w.u16(s.slot);
                }
            } else if constexpr (std::is_same_v<T, BasisRevealBob> || std::is_same_v<T, BasisRevealAlice>) {
                write_bit_vector(w, m.bases);
            } else if constexpr (std::is_same_v<T, QberSample>) {
                if (m.indices.size() != m.bits.size()) malformed("sample indices and bits differ in length");
                check_increasing(m.indices);
                w.u32(static_cast<std::uint32_t>(m.indices.size()));
                for (auto i : m.indices) w.u32(i);
                w.bytes(pack_bits(m.bits));
            } else if constexpr (std::is_same_v<T, Report>) {
                write_report(w, m.report);
            } else if constexpr (std::is_same_v<T, Terminate>) {
                w.u32(m.reason);
            }
        },
        message);
    return w.take();
}

Message decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
    Reader r(payload);
    Message out;
    switch (type) {
        case MsgType::SessionInit: {
            SessionInit m;
            m.digest = r.u64();
            m.n_blocks = r.u64();
            out = m;
            break;
        }
        case MsgType::Detections: {
            Detections m;
            const std::uint32_t count = r.u32();
            if (static_cast<std::size_t>(count) * 6 != r.remaining()) malformed("detection count does not match payload");
            m.slots.resize(count);
            for (auto& s : m.slots) {
                s.block = r.u32();
                s.slot = r.u16();
            }
            check_increasing(m.slots);
            out = std::move(m);
            break;
        }
        case MsgType::BasisRevealBob:
            out = BasisRevealBob{read_bit_vector(r)};
            break;
        case MsgType::BasisRevealAlice:
            out = BasisRevealAlice{read_bit_vector(r)};
            break;
        case MsgType::QberSample: {
            QberSample m;
            const std::uint32_t count = r.u32();
            const std::size_t expected = static_cast<std::size_t>(count) * 4 + (static_cast<std::size_t>(count) + 7) / 8;
            if (expected != r.remaining()) malformed("sample count does not match payload");
            m.indices.resize(count);
            for (auto& i : m.indices) i = r.u32();
            check_increasing(m.indices);
            m.bits = read_packed(r, count);
            out = std::move(m);
            break;
        }
        case MsgType::Report:
            out = Report{read_report(r)};
            break;
        case MsgType::Terminate:
            out = Terminate{r.u32()};
            break;
        default:
            throw WireError(ErrorCode::UnknownType, "message type " + std::to_string(static_cast<int>(type)));
    }
    r.finish();
    return out;
}

bool known_type(std::uint8_t t) { return t >= 1 && t <= 7; }

/// Validates a header and returns (type, payload length).
std::pair<MsgType, std::uint32_t> parse_header(std::span<const std::uint8_t> h) {
    if (!std::equal(std::begin(kMagic), std::end(kMagic), h.begin())) throw WireError(ErrorCode::BadMagic, "bad magic");
    if (h[4] != kVersion) throw WireError(ErrorCode::BadVersion, "version " + std::to_string(h[4]));
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(h[6 + i]) << (8 * i);
    if (len > kMaxPayload) throw WireError(ErrorCode::BadLength, "payload of " + std::to_string(len) + " bytes");
    if (!known_type(h[5])) throw WireError(ErrorCode::UnknownType, "message type " + std::to_string(h[5]));
    return {static_cast<MsgType>(h[5]), len};
}

}  // namespace

MsgType type_of(const Message& message) { return static_cast<MsgType>(message.index() + 1); }

const char* name_of(MsgType type) {
    switch (type) {
        case MsgType::SessionInit: return "SESSION_INIT";
        case MsgType::Detections: return "DETECTIONS";
        case MsgType::BasisRevealBob: return "BASIS_REVEAL_BOB";
        case MsgType::BasisRevealAlice: return "BASIS_REVEAL_ALICE";
        case MsgType::QberSample: return "QBER_SAMPLE";
        case MsgType::Report: return "REPORT";
        case MsgType::Terminate: return "TERMINATE";
    }
    return "UNKNOWN";
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] > 1) malformed("bit value other than 0 or 1");
        packed[i / 8] |= static_cast<std::uint8_t>(bits[i] << (i % 8));
    }
    return packed;
}

std::vector<std::uint8_t> encode(const Message& message) {
    const auto payload = encode_payload(message);
    if (payload.size() > kMaxPayload) throw WireError(ErrorCode::BadLength, "payload exceeds 16 MiB");
    Writer w;
    w.bytes(kMagic);
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(type_of(message)));
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.bytes(payload);
    return w.take();
}

Message decode(std::span<const std::uint8_t> frame) {
    if (frame.size() < kHeaderSize) {
        if (frame.size() >= 4 && !std::equal(std::begin(kMagic), std::end(kMagic), frame.begin())) {
            throw WireError(ErrorCode::BadMagic, "bad magic");
        }
        throw WireError(ErrorCode::BadLength, "frame shorter than its header");
    }
    const auto [type, len] = parse_header(frame.first(kHeaderSize));
    if (frame.size() != kHeaderSize + len) {
        throw WireError(ErrorCode::BadLength, "frame holds " + std::to_string(frame.size() - kHeaderSize) +
                                                  " payload bytes, header says " + std::to_string(len));
    }
    return decode_payload(type, frame.subspan(kHeaderSize));
}

std::variant<Message, ErrorCode> try_decode(std::span<const std::uint8_t> frame) {
    try {
        return decode(frame);
    } catch (const WireError& e) {
        return e.code();
    }
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
    if (offset_ > 0 && offset_ >= buffer_.size() / 2) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
        offset_ = 0;
    }
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameDecoder::next() {
    const std::span<const std::uint8_t> pending(buffer_.data() + offset_, buffer_.size() - offset_);
    if (pending.size() < kHeaderSize) {
        const std::size_t n = std::min<std::size_t>(pending.size(), 4);
        if (!std::equal(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(n), std::begin(kMagic))) {
            throw WireError(ErrorCode::BadMagic, "bad magic");
        }
        return std::nullopt;
    }
    const auto [type, len] = parse_header(pending.first(kHeaderSize));
    if (pending.size() < kHeaderSize + len) return std::nullopt;
    Message m = decode_payload(type, pending.subspan(kHeaderSize, len));
    offset_ += kHeaderSize + len;
    return m;
}

// ---------------------------------------------------------------------------
// In-memory transport

MemoryTransport::MemoryTransport(std::shared_ptr<Channel> inbound, std::shared_ptr<Channel> outbound)
    : inbound_(std::move(inbound)), outbound_(std::move(outbound)) {}

MemoryTransport::~MemoryTransport() { close(); }

void MemoryTransport::send(std::span<const std::uint8_t> bytes) {
    {
        std::lock_guard lock(outbound_->mutex);
        if (outbound_->closed) throw TransportError("send on a closed pipe");
        outbound_->bytes.insert(outbound_->bytes.end(), bytes.begin(), bytes.end());
    }
    outbound_->ready.notify_all();
}

std::size_t MemoryTransport::receive(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) {
    std::unique_lock lock(inbound_->mutex);
    if (!inbound_->ready.wait_for(lock, timeout, [&] { return !inbound_->bytes.empty() || inbound_->closed; })) {
        throw ProtocolError(ProtocolErrorKind::Timeout, "no data within " + std::to_string(timeout.count()) + " ms");
    }
    const std::size_t n = std::min(buffer.size(), inbound_->bytes.size());
    std::copy_n(inbound_->bytes.begin(), n, buffer.begin());
    inbound_->bytes.erase(inbound_->bytes.begin(), inbound_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
}

void MemoryTransport::close() {
    for (auto* ch : {inbound_.get(), outbound_.get()}) {
        if (!ch) continue;
        {
            std::lock_guard lock(ch->mutex);
            ch->closed = true;
        }
        ch->ready.notify_all();
    }
}

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe() {
    auto a_to_b = std::make_shared<MemoryTransport::Channel>();
    auto b_to_a = std::make_shared<MemoryTransport::Channel>();
    return {std::make_unique<MemoryTransport>(b_to_a, a_to_b), std::make_unique<MemoryTransport>(a_to_b, b_to_a)};
}

// ---------------------------------------------------------------------------
// TCP transport

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

struct AddrInfo {
    addrinfo* head = nullptr;
    ~AddrInfo() {
        if (head) freeaddrinfo(head);
    }
};

AddrInfo resolve(const std::string& host, std::uint16_t port, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    AddrInfo out;
    const std::string service = std::to_string(port);
    const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &out.head);
    if (rc != 0) throw TransportError("cannot resolve " + host + ": " + gai_strerror(rc));
    return out;
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

TcpTransport::TcpTransport(int fd) : fd_(fd) { set_nodelay(fd_); }

TcpTransport::~TcpTransport() { close(); }

void TcpTransport::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::string last_error = "no address";
    while (true) {
        AddrInfo info = resolve(host, port, false);
        for (addrinfo* ai = info.head; ai; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) {
                last_error = errno_text("socket");
                continue;
            }
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return std::make_unique<TcpTransport>(fd);
            last_error = errno_text("connect");
            ::close(fd);
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            throw TransportError("cannot connect to " + host + ":" + std::to_string(port) + " (" + last_error + ")");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

void TcpTransport::send(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) {
                throw ProtocolError(ProtocolErrorKind::PeerClosed, errno_text("send"));
            }
            throw TransportError(errno_text("send"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t TcpTransport::receive(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    while (true) {
        const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc < 0) throw TransportError(errno_text("poll"));
        if (rc == 0) {
            throw ProtocolError(ProtocolErrorKind::Timeout, "no data within " + std::to_string(timeout.count()) + " ms");
        }
        break;
    }
    while (true) {
        const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), 0);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0 && errno == ECONNRESET) return 0;
        if (n < 0) throw TransportError(errno_text("recv"));
        return static_cast<std::size_t>(n);
    }
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    AddrInfo info = resolve(host, port, true);
    std::string last_error = "no address";
    for (addrinfo* ai = info.head; ai; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) {
            last_error = errno_text("socket");
            continue;
        }
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 4) == 0) {
            fd_ = fd;
            break;
        }
        last_error = errno_text("bind/listen");
        ::close(fd);
    }
    if (fd_ < 0) throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + " (" + last_error + ")");

    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    if (addr.ss_family == AF_INET) port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    else if (addr.ss_family == AF_INET6) port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpListener::accept(std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    int rc;
    do {
        rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    } while (rc < 0 && errno == EINTR);
    if (rc < 0) throw TransportError(errno_text("poll"));
    if (rc == 0) throw ProtocolError(ProtocolErrorKind::Timeout, "no peer connected in time");
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw TransportError(errno_text("accept"));
    return std::make_unique<TcpTransport>(fd);
}

// ---------------------------------------------------------------------------
// Sessions

void Channel::send(const Message& message) { transport_.send(encode(message)); }

Message Channel::receive() {
    std::uint8_t buf[64 * 1024];
    while (true) {
        if (auto m = decoder_.next()) return std::move(*m);
        const std::size_t n = transport_.receive(buf, timeout_);
        if (n == 0) throw ProtocolError(ProtocolErrorKind::PeerClosed, "peer closed the connection mid-session");
        decoder_.feed(std::span<const std::uint8_t>(buf, n));
    }
}

namespace {

std::vector<std::uint8_t> to_bits(std::span<const Basis> bases) {
    std::vector<std::uint8_t> out(bases.size());
    for (std::size_t i = 0; i < bases.size(); ++i) out[i] = static_cast<std::uint8_t>(bases[i]);
    return out;
}

std::vector<Basis> to_bases(std::span<const std::uint8_t> bits) {
    std::vector<Basis> out(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) out[i] = static_cast<Basis>(bits[i]);
    return out;
}

void try_send(Channel& ch, const Message& m) {
    try {
        ch.send(m);
    } catch (const std::exception&) {
        // The peer may already be gone; the original failure is what matters.
    }
}

/// Receive the next message, requiring type T. A TERMINATE or any other
/// message type aborts the session.
template <typename T>
T expect(Channel& ch) {
    Message m;
    try {
        m = ch.receive();
    } catch (const WireError& e) {
        try_send(ch, Terminate{static_cast<std::uint32_t>(TerminateReason::Malformed)});
        throw ProtocolError(ProtocolErrorKind::Malformed, e.what());
    }
    if (auto* t = std::get_if<T>(&m)) return std::move(*t);
    if (auto* term = std::get_if<Terminate>(&m)) {
        if (term->reason == static_cast<std::uint32_t>(TerminateReason::DigestMismatch)) {
            throw ProtocolError(ProtocolErrorKind::DigestMismatch, "peer rejected the session configuration");
        }
        throw ProtocolError(ProtocolErrorKind::Aborted,
                            "peer terminated the session (reason " + std::to_string(term->reason) + ")");
    }
    try_send(ch, Terminate{static_cast<std::uint32_t>(TerminateReason::ProtocolViolation)});
    throw ProtocolError(ProtocolErrorKind::OutOfOrder, std::string("unexpected ") + name_of(type_of(m)) +
                                                           ", expected " + name_of(type_of(Message(T{}))));
}

/// Run `step`, telling the peer why before rethrowing a malformed announcement.
template <typename F>
auto guarded(Channel& ch, F&& step) {
    try {
        return step();
    } catch (const ProtocolError& e) {
        if (e.kind() == ProtocolErrorKind::Malformed) {
            try_send(ch, Terminate{static_cast<std::uint32_t>(TerminateReason::Malformed)});
        }
        throw;
    }
}

SessionReport run_alice(Channel& ch, const SessionConfig& config) {
    const AliceRecord alice = alice_prepare(config.params, config.n_blocks, config.seed);
    ch.send(SessionInit{digest(config), config.n_blocks});

    const auto detections = expect<Detections>(ch);
    const auto bob_bases = expect<BasisRevealBob>(ch);
    const SiftedKey key = guarded(ch, [&] { return sift_alice(alice, detections.slots, to_bases(bob_bases.bases)); });
    ch.send(BasisRevealAlice{to_bits(alice.bases())});

    QberSample sample;
    sample.indices = choose_sample(key.size(), config.sample_fraction, config.seed);
    for (auto i : sample.indices) sample.bits.push_back(key.bits[i]);
    ch.send(sample);

    const SessionReport report = expect<Report>(ch).report;
    if (report.blocks_sent != alice.n_blocks() || report.sifted_bits_alice != key.size() ||
        report.sample.z_bits + report.sample.x_bits != sample.indices.size()) {
        try_send(ch, Terminate{static_cast<std::uint32_t>(TerminateReason::Malformed)});
        throw ProtocolError(ProtocolErrorKind::Malformed, "report inconsistent with Alice's records");
    }
    ch.send(Terminate{static_cast<std::uint32_t>(TerminateReason::Ok)});
    return report;
}

SessionReport run_bob(Channel& ch, const SessionConfig& config) {
    const auto init = expect<SessionInit>(ch);
    if (init.digest != digest(config) || init.n_blocks != config.n_blocks) {
        try_send(ch, Terminate{static_cast<std::uint32_t>(TerminateReason::DigestMismatch)});
        throw ProtocolError(ProtocolErrorKind::DigestMismatch, "session configuration differs from the peer's");
    }

    // The optical channel is emulated: Bob regenerates the pulses Alice sent
    // from the shared seed. Only the classical announcements cross the wire.
    BobRecord bob;
    {
        const AliceRecord optical_source = alice_prepare(config.params, config.n_blocks, config.seed);
        PulseStream pulses(optical_source);
        bob = bob_measure(pulses, config.params, config.seed);
    }
    ch.send(Detections{announced_slots(bob)});
    ch.send(BasisRevealBob{to_bits(bob.settings)});

    const auto alice_bases = expect<BasisRevealAlice>(ch);
    const SiftedKey key = guarded(ch, [&] { return sift_bob(bob, to_bases(alice_bases.bases)); });
    const auto sample = expect<QberSample>(ch);

    EstimateInputs in;
    in.params = config.params;
    in.blocks_sent = config.n_blocks;
    in.slots_offered = bob.slots_offered;
    in.clicks = bob.clicks;
    in.kept_events = bob.kept.size();
    // Both sides keep exactly the matched-basis announced slots.
    in.sifted_bits_alice = key.size();
    in.sifted_bits_bob = key.size();
    in.sample = guarded(ch, [&] { return tally_sample(key, sample.indices, sample.bits); });
    const SessionReport report = estimate(in);
    ch.send(Report{report});

    const auto done = expect<Terminate>(ch);
    if (done.reason != static_cast<std::uint32_t>(TerminateReason::Ok)) {
        throw ProtocolError(ProtocolErrorKind::Aborted, "peer rejected the report (reason " +
                                                            std::to_string(done.reason) + ")");
    }
    return report;
}

}  // namespace

SessionReport run_session(Role role, Transport& transport, const SessionConfig& config,
                          std::chrono::milliseconds timeout) {
    Channel ch(transport, timeout);
    return role == Role::Alice ? run_alice(ch, config) : run_bob(ch, config);
}

}  // namespace dqps::wire
