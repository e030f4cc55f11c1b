fn main() {
    std::process::exit(pilotsim::simcli::cli(std::env::args_os()));
}
