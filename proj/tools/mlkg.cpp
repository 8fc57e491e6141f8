#include <string>
#include <vector>

#include "mlkg/cli.hpp"

int main(int argc, char** argv) {
    return mlkg::run_command(std::vector<std::string>(argv, argv + argc));
}
