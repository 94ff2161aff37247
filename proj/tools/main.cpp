#include "medagent/cli.hpp"

int main(int argc, char** argv) { return medagent::dispatch(argc, argv); }
