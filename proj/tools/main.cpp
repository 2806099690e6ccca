#include <malloc.h>

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    // Training allocates and frees the same large buffers every step.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return sgma::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
