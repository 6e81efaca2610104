#include "paraformer/core.hpp"

#include <gtest/gtest.h>

int main(int argc, char** argv) {
    paraformer::configure_allocator();
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
