from .response_log import ResponseLog, parse_response_logs, read_response_logs, write_response_logs
from .data_split import DatasetSplit, QMatrix, FrequencyTable
from .data_split import split_dataset, build_q_matrix, compute_frequency, partition_cold_warm, dropout_train
from .LogTriplet import LogTripletDataset
from .utils import prepare_cd_dataset, ingest_logs, save_dataset_dir, load_dataset_dir
