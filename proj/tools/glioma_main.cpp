#include "glioma/cli.hpp"

int main(int argc, char** argv) { return glioma::dispatch(argc, argv); }
