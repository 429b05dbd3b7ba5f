fn main() {
    std::process::exit(mrjsim::run());
}
