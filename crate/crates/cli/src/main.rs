fn main() {
    println!("steadyrl");
}
