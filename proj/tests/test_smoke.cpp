#include "support.hpp"

using namespace xcomm;
using namespace xcomm::testing;

TEST(Smoke, ApiTour) {
    run_ranks(3, TransportKind::tcp, [](Communicator& comm) {
        std::vector<int> v(static_cast<std::size_t>(comm.rank() + 1), comm.rank());
        auto [data, counts, displs] = comm.allgatherv(send_buf(v), recv_counts_out(), recv_displs_out());
        EXPECT_EQ(data, (std::vector<int>{0, 1, 1, 2, 2, 2}));
        EXPECT_EQ(counts, (std::vector<int>{1, 2, 3}));
        EXPECT_EQ(displs, (std::vector<int>{0, 1, 3}));
        std::vector<int> all = comm.allgatherv(send_buf(v));
        auto s = comm.alltoallv(send_buf(std::vector<int>{1, 2, 3}), send_counts({1, 1, 1}));
        auto r = comm.allreduce(send_buf(comm.rank()), op(ops::plus{}));
        auto b = comm.bcast(send_recv_buf(std::vector<int>{1}));
        auto g = comm.gatherv(send_buf(v));
        auto a = comm.allgather(send_buf(comm.rank()));
        auto t = comm.alltoall(send_buf(std::vector<int>{1, 2, 3}));
        std::map<std::string, std::string> m;
        if (comm.rank() == 0) m["a"] = "b";
        comm.bcast(send_recv_buf(as_serialized(m)));
        EXPECT_EQ(m.at("a"), "b");
        auto fut = comm.irecv<int>(source((comm.rank() + 2) % 3));
        auto snd = comm.isend(send_buf(std::vector<int>{4, 5}), destination((comm.rank() + 1) % 3));
        EXPECT_EQ(fut.wait(), (std::vector<int>{4, 5}));
        EXPECT_EQ(snd.wait(), (std::vector<int>{4, 5}));
        comm.send(send_buf(as_serialized(m)), destination(0));
        if (comm.rank() == 0) {
            for (int i = 0; i < 3; ++i) {
                auto got = comm.recv(recv_buf(as_deserializable<std::map<std::string, std::string>>()));
                EXPECT_EQ(got.size(), 1u);
            }
        }
        auto f = with_flattened(std::map<int, std::vector<int>>{{2, {1}}, {0, {2, 3}}}, 3);
        EXPECT_EQ(f.buffer, (std::vector<int>{2, 3, 1}));
    });
}
