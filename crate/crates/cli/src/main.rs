fn main() {
    std::process::exit(pcn_sim::run(std::env::args_os()));
}
