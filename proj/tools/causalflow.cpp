#include "causalflow/cli/app.h"

#include <iostream>

int main(int argc, char** argv) {
    return causalflow::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
