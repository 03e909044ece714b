def noncompliant():
    sqs = boto3.client('sqs', 'us-west-2')
    sqs.send_message_batch()
