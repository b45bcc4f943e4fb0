#include "vtriage/cli.hpp"

int main(int argc, char** argv) { return vtriage::run_command(argc, argv); }
