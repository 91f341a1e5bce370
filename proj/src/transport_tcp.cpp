// TCP transport. Wire format, little-endian, one frame per envelope:
//   [u32 frame_len][u32 src][u32 dst][u32 tag][u8 flags][payload]
// frame_len counts the bytes after itself (13 + payload length). flags bit 0 marks a frame that requires an
// acknowledgement, bit 1 marks an acknowledgement. Acknowledgements carry no payload; their tag field holds the
// per-connection sequence number of the acknowledged frame. Both sides number requires-ack frames implicitly,
// in the order they travel over the connection, so data frames need no extra sequence field.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "transport_impl.hpp"
#include "xcomm/errors.hpp"

namespace xcomm::detail {
namespace {

constexpr std::uint8_t flag_requires_ack = 0x1;
constexpr std::uint8_t flag_is_ack       = 0x2;
constexpr std::size_t  header_size       = 4 + 4 + 4 + 4 + 1;

static_assert(std::endian::native == std::endian::little, "TCP framing assumes a little-endian host");

std::string errno_message(std::string const& what) {
    return what + ": " + std::strerror(errno);
}

void put_u32(std::byte* out, std::uint32_t value) {
    std::memcpy(out, &value, sizeof(value));
}

std::uint32_t get_u32(std::byte const* in) {
    std::uint32_t value;
    std::memcpy(&value, in, sizeof(value));
    return value;
}

bool write_all(int fd, std::byte const* data, std::size_t len) {
    while (len > 0) {
        auto const n = ::send(fd, data, len, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
    return true;
}

bool read_all(int fd, std::byte* data, std::size_t len) {
    while (len > 0) {
        auto const n = ::recv(fd, data, len, 0);
        if (n == 0) {
            return false;
        }
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
    return true;
}

struct Address {
    std::string host;
    int         port = 0;
};

Address parse_address(std::string const& text) {
    auto const colon = text.rfind(':');
    if (colon == std::string::npos) {
        throw UsageError("address '" + text + "' must have the form host:port");
    }
    Address addr{text.substr(0, colon), 0};
    try {
        addr.port = std::stoi(text.substr(colon + 1));
    } catch (std::exception const&) {
        throw UsageError("address '" + text + "' has an invalid port");
    }
    return addr;
}

sockaddr_in resolve(Address const& addr) {
    addrinfo hints{};
    hints.ai_family   = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found   = nullptr;
    if (int rc = ::getaddrinfo(addr.host.c_str(), nullptr, &hints, &found); rc != 0 || found == nullptr) {
        throw TransportError("cannot resolve host '" + addr.host + "': " + ::gai_strerror(rc));
    }
    sockaddr_in sa{};
    std::memcpy(&sa, found->ai_addr, sizeof(sa));
    ::freeaddrinfo(found);
    sa.sin_port = htons(static_cast<std::uint16_t>(addr.port));
    return sa;
}

/// Owns a socket file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            reset();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    Socket(Socket const&)            = delete;
    Socket& operator=(Socket const&) = delete;
    ~Socket() {
        reset();
    }

    int get() const noexcept {
        return fd_;
    }
    void reset() noexcept {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

Socket listen_on(Address const& addr) {
    Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (sock.get() < 0) {
        throw TransportError(errno_message("socket"));
    }
    int one = 1;
    ::setsockopt(sock.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    auto sa = resolve(addr);
    if (::bind(sock.get(), reinterpret_cast<sockaddr const*>(&sa), sizeof(sa)) != 0) {
        throw TransportError(errno_message("bind " + addr.host + ":" + std::to_string(addr.port)));
    }
    if (::listen(sock.get(), 128) != 0) {
        throw TransportError(errno_message("listen"));
    }
    return sock;
}

int bound_port(Socket const& sock) {
    sockaddr_in sa{};
    socklen_t   len = sizeof(sa);
    if (::getsockname(sock.get(), reinterpret_cast<sockaddr*>(&sa), &len) != 0) {
        throw TransportError(errno_message("getsockname"));
    }
    return ntohs(sa.sin_port);
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

Socket connect_with_retry(Address const& addr, std::chrono::milliseconds timeout) {
    auto const sa       = resolve(addr);
    auto const deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
        if (sock.get() < 0) {
            throw TransportError(errno_message("socket"));
        }
        if (::connect(sock.get(), reinterpret_cast<sockaddr const*>(&sa), sizeof(sa)) == 0) {
            set_nodelay(sock.get());
            return sock;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            throw TransportError(errno_message("connect " + addr.host + ":" + std::to_string(addr.port)));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

class TcpEndpoint final : public Endpoint {
public:
    TcpEndpoint(int rank, int size, std::vector<Socket> sockets) : Endpoint(rank, size), links_(sockets.size()) {
        for (std::size_t peer = 0; peer < sockets.size(); ++peer) {
            if (static_cast<int>(peer) == rank) {
                continue;
            }
            links_[peer]         = std::make_unique<Link>();
            links_[peer]->socket = std::move(sockets[peer]);
        }
        for (std::size_t peer = 0; peer < links_.size(); ++peer) {
            if (links_[peer]) {
                links_[peer]->reader = std::thread([this, peer] { read_loop(static_cast<int>(peer)); });
            }
        }
    }

    ~TcpEndpoint() override {
        for (auto& link: links_) {
            if (link) {
                ::shutdown(link->socket.get(), SHUT_RDWR);
            }
        }
        for (auto& link: links_) {
            if (link && link->reader.joinable()) {
                link->reader.join();
            }
        }
    }

protected:
    void transmit(Envelope env, std::shared_ptr<std::atomic<bool>> done) override {
        auto&        link  = *links_[static_cast<std::size_t>(env.dst)];
        std::uint8_t flags = done ? flag_requires_ack : 0;
        std::lock_guard lock(link.write_mutex);
        if (done) {
            std::lock_guard ack_lock(link.ack_mutex);
            link.awaiting_ack.emplace(link.next_out_seq++, std::move(done));
        }
        if (!write_frame(link, env.src, env.dst, env.tag, flags, env.payload)) {
            throw TransportError("tcp send to rank " + std::to_string(env.dst) + " failed");
        }
    }

private:
    struct Link {
        Socket        socket;
        std::mutex    write_mutex;
        std::uint32_t next_out_seq = 0; // guarded by write_mutex
        std::uint32_t next_in_seq  = 0; // reader thread only
        std::mutex    ack_mutex;
        std::unordered_map<std::uint32_t, std::shared_ptr<std::atomic<bool>>> awaiting_ack;
        std::thread                                                           reader;
    };

    static bool write_frame(Link& link, int src, int dst, Tag tag, std::uint8_t flags, Bytes const& payload) {
        std::array<std::byte, 4 + header_size - 4> header{};
        put_u32(header.data(), static_cast<std::uint32_t>(header_size - 4 + payload.size()));
        put_u32(header.data() + 4, static_cast<std::uint32_t>(src));
        put_u32(header.data() + 8, static_cast<std::uint32_t>(dst));
        put_u32(header.data() + 12, tag);
        header[16] = static_cast<std::byte>(flags);
        return write_all(link.socket.get(), header.data(), header.size())
               && write_all(link.socket.get(), payload.data(), payload.size());
    }

    void send_ack(int peer, std::uint32_t seq) {
        auto&           link = *links_[static_cast<std::size_t>(peer)];
        std::lock_guard lock(link.write_mutex);
        // A failed ack write means the peer is gone; nobody is left to wait for it.
        write_frame(link, rank(), peer, seq, flag_is_ack, {});
    }

    void read_loop(int peer) {
        auto& link = *links_[static_cast<std::size_t>(peer)];
        while (true) {
            std::array<std::byte, 4> len_buf{};
            if (!read_all(link.socket.get(), len_buf.data(), len_buf.size())) {
                return;
            }
            auto const frame_len = get_u32(len_buf.data());
            if (frame_len < header_size - 4) {
                return;
            }
            std::array<std::byte, header_size - 4> header{};
            if (!read_all(link.socket.get(), header.data(), header.size())) {
                return;
            }
            Envelope env;
            env.src          = static_cast<int>(get_u32(header.data()));
            env.dst          = static_cast<int>(get_u32(header.data() + 4));
            env.tag          = get_u32(header.data() + 8);
            auto const flags = static_cast<std::uint8_t>(header[12]);
            env.payload.resize(frame_len - (header_size - 4));
            if (!read_all(link.socket.get(), env.payload.data(), env.payload.size())) {
                return;
            }
            if (flags & flag_is_ack) {
                std::shared_ptr<std::atomic<bool>> done;
                {
                    std::lock_guard lock(link.ack_mutex);
                    auto            it = link.awaiting_ack.find(env.tag);
                    if (it != link.awaiting_ack.end()) {
                        done = std::move(it->second);
                        link.awaiting_ack.erase(it);
                    }
                }
                if (done) {
                    done->store(true, std::memory_order_release);
                    notify_activity();
                }
            } else if (flags & flag_requires_ack) {
                auto const seq = link.next_in_seq++;
                enqueue(std::move(env), [this, peer, seq] { send_ack(peer, seq); });
            } else {
                enqueue(std::move(env));
            }
        }
    }

    std::vector<std::unique_ptr<Link>> links_;
};

/// Establishes the full mesh for `rank`: connects to every lower rank and accepts every higher one.
std::shared_ptr<Endpoint> build_mesh(
    int rank, int size, Socket listener, std::vector<Address> const& addresses, std::chrono::milliseconds timeout
) {
    std::vector<Socket> sockets(static_cast<std::size_t>(size));
    for (int peer = 0; peer < rank; ++peer) {
        auto          sock  = connect_with_retry(addresses[static_cast<std::size_t>(peer)], timeout);
        std::byte     hello[4];
        put_u32(hello, static_cast<std::uint32_t>(rank));
        if (!write_all(sock.get(), hello, sizeof(hello))) {
            throw TransportError("handshake with rank " + std::to_string(peer) + " failed");
        }
        sockets[static_cast<std::size_t>(peer)] = std::move(sock);
    }
    for (int accepted = 0; accepted < size - 1 - rank; ++accepted) {
        Socket sock(::accept(listener.get(), nullptr, nullptr));
        if (sock.get() < 0) {
            throw TransportError(errno_message("accept"));
        }
        set_nodelay(sock.get());
        std::byte hello[4];
        if (!read_all(sock.get(), hello, sizeof(hello))) {
            throw TransportError("handshake read failed");
        }
        auto const peer = static_cast<int>(get_u32(hello));
        if (peer <= rank || peer >= size || sockets[static_cast<std::size_t>(peer)].get() >= 0) {
            throw TransportError("unexpected handshake from rank " + std::to_string(peer));
        }
        sockets[static_cast<std::size_t>(peer)] = std::move(sock);
    }
    return std::make_shared<TcpEndpoint>(rank, size, std::move(sockets));
}

std::vector<Address> configured_addresses(int size, TransportConfig const& config) {
    std::vector<Address> addresses;
    if (!config.addresses.empty()) {
        if (static_cast<int>(config.addresses.size()) != size) {
            throw UsageError(
                "tcp address list has " + std::to_string(config.addresses.size()) + " entries for "
                + std::to_string(size) + " ranks"
            );
        }
        for (auto const& text: config.addresses) {
            addresses.push_back(parse_address(text));
        }
        return addresses;
    }
    for (int rank = 0; rank < size; ++rank) {
        addresses.push_back({config.host, config.port_base == 0 ? 0 : config.port_base + rank});
    }
    return addresses;
}

} // namespace

std::vector<std::shared_ptr<Endpoint>> make_tcp_endpoints(int size, TransportConfig const& config) {
    auto                addresses = configured_addresses(size, config);
    std::vector<Socket> listeners;
    for (auto& addr: addresses) {
        listeners.push_back(listen_on(addr));
        addr.port = bound_port(listeners.back());
    }

    std::vector<std::shared_ptr<Endpoint>> endpoints(static_cast<std::size_t>(size));
    std::vector<std::exception_ptr>        errors(static_cast<std::size_t>(size));
    std::vector<std::thread>               builders;
    for (int rank = 0; rank < size; ++rank) {
        builders.emplace_back([&, rank] {
            auto const idx = static_cast<std::size_t>(rank);
            try {
                endpoints[idx] = build_mesh(rank, size, std::move(listeners[idx]), addresses, config.connect_timeout);
            } catch (...) {
                errors[idx] = std::current_exception();
            }
        });
    }
    for (auto& builder: builders) {
        builder.join();
    }
    for (auto const& error: errors) {
        if (error) {
            std::rethrow_exception(error);
        }
    }
    return endpoints;
}

} // namespace xcomm::detail

namespace xcomm {

std::shared_ptr<Endpoint> connect_tcp_endpoint(int rank, int size, TransportConfig const& config) {
    if (size < 1 || rank < 0 || rank >= size) {
        throw UsageError("rank " + std::to_string(rank) + " invalid for group of size " + std::to_string(size));
    }
    if (config.addresses.empty() && config.port_base == 0) {
        throw UsageError("a multi-process tcp group needs --port-base or an explicit address list");
    }
    auto addresses = detail::configured_addresses(size, config);
    auto listener  = detail::listen_on(addresses[static_cast<std::size_t>(rank)]);
    return detail::build_mesh(rank, size, std::move(listener), addresses, config.connect_timeout);
}

} // namespace xcomm
