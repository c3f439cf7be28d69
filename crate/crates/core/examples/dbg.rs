use bcgraph::sig::*;
fn main() {
    for lam in enumerate_level(3, 2) {
        let fast: std::collections::BTreeMap<_,_> = bc_predecessors(&lam).into_iter().collect();
        let lp = lam.parts();
        let mut brute: std::collections::BTreeMap<Signature, Vec<Signature>> = Default::default();
        for n1 in 0..=lp[0] { for n2 in 0..=n1 {
            if !(lp[0]>=n1 && n1>=lp[1] && lp[1]>=n2 && n2>=lp[2]) { continue; }
            let nu = Signature::new(vec![n1,n2]).unwrap();
            for m1 in 0..=n1 { for m2 in 0..=m1 {
                if n1>=m1 && m1>=n2 && n2>=m2 {
                    brute.entry(Signature::new(vec![m1,m2]).unwrap()).or_default().push(nu.clone());
                }
            }}
        }}
        if fast != brute {
            println!("MISMATCH at lam={lam}");
            println!("fast : {:?}", fast.iter().map(|(k,v)|(k.to_string(), v.len())).collect::<Vec<_>>());
            println!("brute: {:?}", brute.iter().map(|(k,v)|(k.to_string(), v.len())).collect::<Vec<_>>());
            println!("interlacing_below: {:?}", interlacing_below(&lam).iter().map(|s|s.to_string()).collect::<Vec<_>>());
        }
    }
}
