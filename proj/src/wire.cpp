// SPDX-License-Identifier: Apache-2.0

#include "masktrack/wire.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include "json.hpp"

namespace masktrack::wire {

static_assert(std::endian::native == std::endian::little,
              "the wire codec assumes a little-endian host");

using nlohmann::json;

namespace {

// Upper bound on a JSON header and on a frame side; protects allocations.
constexpr std::uint32_t kMaxHeader = 1U << 16;
constexpr std::uint32_t kMaxSide = 1U << 15;

void put_magic(std::vector<std::byte>& out, const Magic& m) {
    for (char c : m) out.push_back(static_cast<std::byte>(c));
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + 4);
}

void put_bytes(std::vector<std::byte>& out, std::span<const std::uint8_t> bytes) {
    const auto* p = reinterpret_cast<const std::byte*>(bytes.data());
    out.insert(out.end(), p, p + bytes.size());
}

void put_header(std::vector<std::byte>& out, const json& header) {
    const std::string text = header.dump();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void put_mask(std::vector<std::byte>& out, const BinaryMask& mask) {
    for (std::uint8_t v : mask.data()) out.push_back(static_cast<std::byte>(v ? 255 : 0));
}

void put_image_block(std::vector<std::byte>& out, const Image& image, bool has_mask) {
    put_header(out, json{{"w", image.width()},
                         {"h", image.height()},
                         {"channels", image.channels()},
                         {"has_mask", has_mask}});
    put_bytes(out, image.data());
}

Magic read_magic(Stream& s) {
    Magic m{};
    s.read_exact(std::as_writable_bytes(std::span(m)));
    return m;
}

std::uint32_t read_u32(Stream& s) {
    std::uint32_t v = 0;
    s.read_exact(std::as_writable_bytes(std::span(&v, 1)));
    return v;
}

json read_header(Stream& s) {
    const std::uint32_t len = read_u32(s);
    if (len == 0 || len > kMaxHeader) throw ProtocolError("header length " + std::to_string(len) + " out of range");
    std::string text(len, '\0');
    s.read_exact(std::as_writable_bytes(std::span(text.data(), text.size())));
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON header: ") + e.what());
    }
}

int header_int(const json& h, const char* key) {
    if (!h.contains(key) || !h[key].is_number_integer()) {
        throw ProtocolError(std::string("header field '") + key + "' missing or not an integer");
    }
    return h[key].get<int>();
}

struct BlockHeader {
    int w = 0;
    int h = 0;
    int channels = 0;
    bool has_mask = false;
};

BlockHeader parse_block_header(const json& h) {
    BlockHeader b{header_int(h, "w"), header_int(h, "h"), header_int(h, "channels"), false};
    if (!h.contains("has_mask") || !h["has_mask"].is_boolean()) {
        throw ProtocolError("header field 'has_mask' missing or not a boolean");
    }
    b.has_mask = h["has_mask"].get<bool>();
    if (b.w < 1 || b.h < 1 || static_cast<std::uint32_t>(b.w) > kMaxSide ||
        static_cast<std::uint32_t>(b.h) > kMaxSide) {
        throw ProtocolError("frame size out of range");
    }
    if (b.channels != 1 && b.channels != 3) throw ProtocolError("channels must be 1 or 3");
    return b;
}

Image read_image_bytes(Stream& s, const BlockHeader& b) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(b.w) * b.h * b.channels);
    s.read_exact(std::as_writable_bytes(std::span(data)));
    return Image(b.w, b.h, b.channels, std::move(data));
}

BinaryMask read_mask_bytes(Stream& s, const BlockHeader& b) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(b.w) * b.h);
    s.read_exact(std::as_writable_bytes(std::span(data)));
    return BinaryMask(b.w, b.h, data);
}

std::string magic_text(const Magic& m) { return std::string(m.begin(), m.end()); }

}  // namespace

void BufferStream::write_all(std::span<const std::byte> bytes) {
    output_.insert(output_.end(), bytes.begin(), bytes.end());
}

void BufferStream::read_exact(std::span<std::byte> out) {
    if (out.empty()) return;
    if (pos_ == input_.size()) throw EndOfStream("end of stream");
    if (input_.size() - pos_ < out.size()) {
        pos_ = input_.size();
        throw ProtocolError("truncated frame");
    }
    std::memcpy(out.data(), input_.data() + pos_, out.size());
    pos_ += out.size();
}

FdStream::FdStream(int read_fd, int write_fd, int child_pid)
    : read_fd_(read_fd), write_fd_(write_fd), child_pid_(child_pid) {}

FdStream::~FdStream() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_pid_ > 0) {
        int status = 0;
        ::waitpid(child_pid_, &status, 0);
    }
}

void FdStream::write_all(std::span<const std::byte> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

void FdStream::read_exact(std::span<std::byte> out) {
    std::size_t done = 0;
    while (done < out.size()) {
        const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            if (done == 0) throw EndOfStream("end of stream");
            throw ProtocolError("truncated frame");
        }
        done += static_cast<std::size_t>(n);
    }
}

namespace {

std::unique_ptr<Stream> connect_tcp(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
        throw ProtocolError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(found);
    if (fd < 0) throw ProtocolError("cannot connect to " + host + ":" + port);
    return std::make_unique<FdStream>(fd, fd);
}

std::unique_ptr<Stream> spawn(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw ProtocolError("pipe failed");
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw ProtocolError("pipe failed");
    }
    // A backend that dies must surface as a write error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
    const pid_t pid = ::fork();
    if (pid < 0) throw ProtocolError("fork failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<FdStream>(from_child[0], to_child[1], pid);
}

}  // namespace

std::unique_ptr<Stream> open_endpoint(const std::string& address) {
    if (address.rfind("exec:", 0) == 0) return spawn(address.substr(5));
    std::string rest = address.rfind("tcp:", 0) == 0 ? address.substr(4) : address;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
        throw ProtocolError("bad endpoint address '" + address +
                            "' (expected tcp:<host>:<port> or exec:<command>)");
    }
    return connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
}

std::vector<std::byte> encode_request(const Image& image, const BinaryMask* mask) {
    if (mask != nullptr) {
        require_same_size(image.width(), image.height(), mask->width(), mask->height(), "wire request");
    }
    std::vector<std::byte> out;
    put_magic(out, kRequest);
    put_image_block(out, image, mask != nullptr);
    if (mask != nullptr) put_mask(out, *mask);
    return out;
}

std::vector<std::byte> encode_response_raw(int width, int height, std::span<const float> scores) {
    std::vector<std::byte> out;
    put_magic(out, kResponse);
    put_u32(out, static_cast<std::uint32_t>(width));
    put_u32(out, static_cast<std::uint32_t>(height));
    const auto* p = reinterpret_cast<const std::byte*>(scores.data());
    out.insert(out.end(), p, p + scores.size_bytes());
    return out;
}

std::vector<std::byte> encode_response(const ScoreMap& scores) {
    return encode_response_raw(scores.width(), scores.height(), scores.data());
}

std::vector<std::byte> encode_error(std::string_view message) {
    std::vector<std::byte> out;
    put_magic(out, kError);
    put_u32(out, static_cast<std::uint32_t>(message.size()));
    put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(message.data()), message.size()));
    return out;
}

std::vector<std::byte> encode_fine_tune(std::span<const TrainingSample> samples) {
    std::vector<std::byte> out;
    put_magic(out, kFineTune);
    put_header(out, json{{"n_samples", samples.size()}});
    for (const auto& s : samples) {
        require_same_size(s.image.width(), s.image.height(), s.input_mask.width(),
                          s.input_mask.height(), "fine-tune sample '" + s.id + "' input");
        require_same_size(s.image.width(), s.image.height(), s.target_mask.width(),
                          s.target_mask.height(), "fine-tune sample '" + s.id + "' target");
        put_image_block(out, s.image, true);
        put_mask(out, s.input_mask);
        put_mask(out, s.target_mask);
    }
    return out;
}

std::vector<std::byte> encode_shutdown() {
    std::vector<std::byte> out;
    put_magic(out, kShutdown);
    return out;
}

ClientMessage read_client_message(Stream& stream) {
    const Magic magic = read_magic(stream);
    if (magic == kShutdown) return Shutdown{};
    if (magic == kRequest) {
        const BlockHeader b = parse_block_header(read_header(stream));
        Request r{read_image_bytes(stream, b), std::nullopt};
        if (b.has_mask) r.mask = read_mask_bytes(stream, b);
        return r;
    }
    if (magic == kFineTune) {
        const json h = read_header(stream);
        if (!h.contains("n_samples") || !h["n_samples"].is_number_unsigned()) {
            throw ProtocolError("fine-tune header needs a non-negative 'n_samples'");
        }
        const auto n = h["n_samples"].get<std::size_t>();
        FineTune ft;
        for (std::size_t i = 0; i < n; ++i) {
            const BlockHeader b = parse_block_header(read_header(stream));
            if (!b.has_mask) throw ProtocolError("fine-tune sample " + std::to_string(i) + " lacks masks");
            TrainingSample s;
            s.id = "sample_" + std::to_string(i);
            s.image = read_image_bytes(stream, b);
            s.input_mask = read_mask_bytes(stream, b);
            s.target_mask = read_mask_bytes(stream, b);
            ft.samples.push_back(std::move(s));
        }
        return ft;
    }
    throw ProtocolError("unexpected client frame '" + magic_text(magic) + "'");
}

ScoreMap read_response(Stream& stream, int expected_width, int expected_height) {
    const Magic magic = read_magic(stream);
    if (magic == kError) {
        const std::uint32_t len = read_u32(stream);
        if (len > kMaxHeader) throw ProtocolError("error message too long");
        std::string text(len, '\0');
        stream.read_exact(std::as_writable_bytes(std::span(text.data(), text.size())));
        throw RemoteError("backend error: " + text);
    }
    if (magic != kResponse) throw ProtocolError("unexpected server frame '" + magic_text(magic) + "'");
    const auto w = static_cast<int>(read_u32(stream));
    const auto h = static_cast<int>(read_u32(stream));
    if (w != expected_width || h != expected_height) {
        throw ProtocolError("response size " + std::to_string(w) + "x" + std::to_string(h) +
                            " does not match request " + std::to_string(expected_width) + "x" +
                            std::to_string(expected_height));
    }
    std::vector<float> scores(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    stream.read_exact(std::as_writable_bytes(std::span(scores)));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i]) || scores[i] < 0.0F || scores[i] > 1.0F) {
            throw ProtocolError("response score " + std::to_string(scores[i]) + " at index " +
                                std::to_string(i) + " is not a probability");
        }
    }
    if (scores.empty()) return ScoreMap();
    return ScoreMap(w, h, std::move(scores));
}

ScoreMap Client::refine(const Image& image, const BinaryMask* mask) {
    stream_->write_all(encode_request(image, mask));
    return read_response(*stream_, image.width(), image.height());
}

void Client::fine_tune(std::span<const TrainingSample> samples) {
    stream_->write_all(encode_fine_tune(samples));
    (void)read_response(*stream_, 0, 0);
}

void Client::shutdown() { stream_->write_all(encode_shutdown()); }

void serve(Stream& stream, const Handlers& handlers) {
    while (true) {
        ClientMessage message;
        try {
            message = read_client_message(stream);
        } catch (const EndOfStream&) {
            return;
        } catch (const ProtocolError& e) {
            // The stream can no longer be framed; report and stop.
            stream.write_all(encode_error(e.what()));
            return;
        }
        if (std::holds_alternative<Shutdown>(message)) return;
        try {
            if (const auto* req = std::get_if<Request>(&message)) {
                const ScoreMap scores = handlers.refine(*req);
                stream.write_all(encode_response(scores));
            } else {
                if (handlers.fine_tune) handlers.fine_tune(std::get<FineTune>(message));
                stream.write_all(encode_response_raw(0, 0, {}));
            }
        } catch (const std::exception& e) {
            stream.write_all(encode_error(e.what()));
        }
    }
}

}  // namespace masktrack::wire
