//! Annotation embeddings: the trigram-hash fallback and a loaded table.

use tlsfd::nn::dot;
use tlsfd::text_embed::{
    embed_annotation, hash_embed, read_embedding_table, write_embedding_table, AnnotationEmbedding,
    EmbeddingTable, EMBED_DIM,
};

fn main() -> tlsfd::Result<()> {
    let texts = [
        "BPFO Env low",
        "BPFO in env low levels keep watch",
        "WO written cable replacement",
        "Replace the sensor next stop",
    ];
    let vectors: Vec<_> = texts.iter().map(|t| hash_embed(t)).collect::<tlsfd::Result<_>>()?;
    println!("cosine similarity of hashed embeddings:");
    for (i, a) in texts.iter().enumerate() {
        let row: Vec<String> = vectors
            .iter()
            .map(|v| format!("{:5.2}", dot(vectors[i].as_slice(), v.as_slice())))
            .collect();
        println!("  {a:<36} {}", row.join(" "));
    }

    // A table from an external encoder; here a one-hot stand-in.
    let mut table = EmbeddingTable::loaded();
    let mut onehot = vec![0.0; EMBED_DIM];
    onehot[7] = 1.0;
    table.insert("BPFO Env low", AnnotationEmbedding::new(onehot)?)?;

    let mut file = Vec::new();
    write_embedding_table(&table, &mut file)?;
    let table = read_embedding_table(file.as_slice())?;

    let hit = embed_annotation(&table, "  bpfo ENV low ")?;
    let miss = embed_annotation(&table, "Looseness high levels check bolts")?;
    println!("hit component 7 = {}; miss norm = {:.6}; misses so far = {}", hit.as_slice()[7], dot(miss.as_slice(), miss.as_slice()).sqrt(), table.misses());
    Ok(())
}
