#include "impulse_qvi/cli.hpp"

int main(int argc, char** argv) { return impulse_qvi::run_cli(argc, argv); }
