// SPDX-License-Identifier: Apache-2.0
//
// Binary protocol spoken with external refinement backends over a stream
// socket or a pair of pipes. All integers are little-endian u32.
//
//   request   "MTRQ" | header_len | JSON {"w","h","channels","has_mask"}
//             | image bytes (w*h*channels) | mask bytes (w*h, iff has_mask)
//   response  "MTRS" | w | h | w*h float32 scores
//   error     "MTER" | msg_len | UTF-8 message
//   fine-tune "MTFT" | header_len | JSON {"n_samples"}
//             then n_samples times:
//               header_len | JSON {"w","h","channels","has_mask":true}
//               | image bytes | input mask bytes | target mask bytes
//             acknowledged with a 0x0 "MTRS" response
//   shutdown  "MTBY" (no reply)
//
// Mask bytes are 0 for background and 255 for foreground; readers treat any
// nonzero byte as foreground.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "masktrack/mask_synthesis.hpp"
#include "masktrack/types.hpp"

namespace masktrack::wire {

class ProtocolError : public Error {
public:
    using Error::Error;
};

/// The peer closed the stream at a frame boundary.
class EndOfStream : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

/// The backend answered with an "MTER" frame.
class RemoteError : public Error {
public:
    using Error::Error;
};

using Magic = std::array<char, 4>;
inline constexpr Magic kRequest{'M', 'T', 'R', 'Q'};
inline constexpr Magic kResponse{'M', 'T', 'R', 'S'};
inline constexpr Magic kError{'M', 'T', 'E', 'R'};
inline constexpr Magic kFineTune{'M', 'T', 'F', 'T'};
inline constexpr Magic kShutdown{'M', 'T', 'B', 'Y'};

/// Blocking byte transport.
class Stream {
public:
    virtual ~Stream() = default;
    virtual void write_all(std::span<const std::byte> bytes) = 0;
    /// Fills `out` completely. Throws EndOfStream when no byte could be read
    /// and ProtocolError on a partial read.
    virtual void read_exact(std::span<std::byte> out) = 0;
};

/// In-memory stream: reads consume `input`, writes append to `output`.
class BufferStream final : public Stream {
public:
    explicit BufferStream(std::vector<std::byte> input = {}) : input_(std::move(input)) {}
    void write_all(std::span<const std::byte> bytes) override;
    void read_exact(std::span<std::byte> out) override;
    [[nodiscard]] const std::vector<std::byte>& output() const noexcept { return output_; }
    [[nodiscard]] bool exhausted() const noexcept { return pos_ == input_.size(); }

private:
    std::vector<std::byte> input_;
    std::size_t pos_ = 0;
    std::vector<std::byte> output_;
};

/// Stream over a pair of POSIX file descriptors, closed on destruction.
class FdStream final : public Stream {
public:
    FdStream(int read_fd, int write_fd, int child_pid = -1);
    ~FdStream() override;
    FdStream(const FdStream&) = delete;
    FdStream& operator=(const FdStream&) = delete;

    void write_all(std::span<const std::byte> bytes) override;
    void read_exact(std::span<std::byte> out) override;

private:
    int read_fd_;
    int write_fd_;
    int child_pid_;
};

/// "tcp:<host>:<port>" or "<host>:<port>" connects a TCP socket;
/// "exec:<shell command>" spawns the command and talks over its stdin/stdout.
std::unique_ptr<Stream> open_endpoint(const std::string& address);

// Frame encoders.
std::vector<std::byte> encode_request(const Image& image, const BinaryMask* mask);
std::vector<std::byte> encode_response(const ScoreMap& scores);
/// Writes raw float32 scores without range checks (for conformance testing).
std::vector<std::byte> encode_response_raw(int width, int height, std::span<const float> scores);
std::vector<std::byte> encode_error(std::string_view message);
std::vector<std::byte> encode_fine_tune(std::span<const TrainingSample> samples);
std::vector<std::byte> encode_shutdown();

struct Request {
    Image image;
    std::optional<BinaryMask> mask;
};

struct FineTune {
    std::vector<TrainingSample> samples;
};

struct Shutdown {};

using ClientMessage = std::variant<Request, FineTune, Shutdown>;

/// Reads one client frame (server side).
ClientMessage read_client_message(Stream& stream);

/// Reads one server frame and validates it against the expected size:
/// scores must be finite and within [0, 1]. Throws RemoteError for "MTER".
ScoreMap read_response(Stream& stream, int expected_width, int expected_height);

class Client {
public:
    explicit Client(std::unique_ptr<Stream> stream) : stream_(std::move(stream)) {}

    ScoreMap refine(const Image& image, const BinaryMask* mask);
    void fine_tune(std::span<const TrainingSample> samples);
    void shutdown();

private:
    std::unique_ptr<Stream> stream_;
};

/// Server loop: answers requests until "MTBY" or EOF. Handler exceptions
/// become "MTER" frames; an unframeable message ends the loop after an
/// "MTER". A null `fine_tune` acknowledges and ignores fine-tune frames.
struct Handlers {
    std::function<ScoreMap(const Request&)> refine;
    std::function<void(const FineTune&)> fine_tune;
};
void serve(Stream& stream, const Handlers& handlers);

}  // namespace masktrack::wire
