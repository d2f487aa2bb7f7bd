fn main() {
    std::process::exit(aclab::harness::main_entry());
}
